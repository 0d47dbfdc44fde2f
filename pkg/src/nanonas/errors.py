"""Exception taxonomy shared across the library.

The CLI maps these onto exit codes: ConfigError -> 2, NumericError -> 3,
InfeasibleError -> 4.
"""


class NanonasError(Exception):
    """Base class for all library errors."""


class ConfigError(NanonasError):
    """Invalid configuration, schema, or argument."""


class ShapeError(ConfigError):
    """Tensor dimension mismatch."""


class FormatError(ConfigError):
    """Malformed input file (IDX, LUT json, checkpoint container)."""


class NumericError(NanonasError):
    """Non-finite value or numerically unusable state, named at the source."""


class DivergenceError(NumericError):
    """A training loop produced a non-finite loss.

    Carries a reference to the last-good checkpoint written on abort.
    """

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint


class InfeasibleError(NanonasError):
    """A constrained sampling problem has no feasible point."""
