"""Differentiable per-layer runtime model over a latency lookup table.

A table holds measured (or synthesized) milliseconds for every candidate
block shape of every searchable layer. The model composes those entries with
the same architecture indicators the supernet uses, so predicted runtime is
differentiable with respect to weights and thresholds in relaxed mode and
collapses to exact table lookups when the indicators are binary.

The composition is written once over `+ - *` only, so it accepts plain
floats (hard decisions) and graph scalars (relaxed indicators) unchanged.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FormatError
from .searchspace import (KERNEL_CHOICES, EXPANSION_CHOICES, SE_CHOICES, MAX_EXPANSION,
                          MBConvType, SearchSpaceConfig)

LUT_VERSION = 1

# Synthetic generator constants: milliseconds per MAC, and the efficiency
# factor for the squeeze/excite 1x1 convs that run on pooled vectors.
ALPHA_MS_PER_MAC = 2.8e-5
SE_POOLED_GEMM_FACTOR = 0.25

_SE_LEVELS = (0.25, 0.5)


def _entry_key(layer, k, e, se):
    return (int(layer), int(k), int(e), float(se))


@dataclass
class LatencyTable:
    """Complete per-layer runtimes plus the fixed stem+head overhead."""

    entries: dict
    fixed_overhead_ms: float
    scaling: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.entries = {_entry_key(*k): float(v) for k, v in self.entries.items()}
        self._validate_complete()
        if min(self.entries.values()) <= 0.0:
            raise ConfigError("latency table entries must all be positive")
        if self.fixed_overhead_ms <= 0.0:
            raise ConfigError("fixed_overhead_ms must be positive")
        if not self.scaling:
            self.scaling = {
                (i, k, e, se): self.entries[(i, k, e, se)] / self.entries[(i, k, e, 0.0)]
                for i in self.layers() for k in KERNEL_CHOICES
                for e in EXPANSION_CHOICES for se in _SE_LEVELS}

    def _validate_complete(self):
        layers = self.layers()
        if not layers:
            raise ConfigError("latency table has no entries")
        for i in layers:
            for k in KERNEL_CHOICES:
                for e in EXPANSION_CHOICES:
                    for se in SE_CHOICES:
                        if (i, k, e, se) not in self.entries:
                            raise ConfigError(
                                f"latency table incomplete: missing entry "
                                f"(layer={i}, k={k}, e={e}, se={se})")

    def layers(self):
        return sorted({k[0] for k in self.entries})

    def monotonicity_violations(self):
        """Entries where a strictly larger block is recorded as faster."""
        bad = []
        for i in self.layers():
            for e in EXPANSION_CHOICES:
                for se in SE_CHOICES:
                    if self.entries[(i, 5, e, se)] < self.entries[(i, 3, e, se)]:
                        bad.append(("kernel", i, e, se))
            for k in KERNEL_CHOICES:
                for se in SE_CHOICES:
                    if self.entries[(i, k, 6, se)] < self.entries[(i, k, 3, se)]:
                        bad.append(("expansion", i, k, se))
            for k in KERNEL_CHOICES:
                for e in EXPANSION_CHOICES:
                    for lo, hi in ((0.0, 0.25), (0.25, 0.5)):
                        if self.entries[(i, k, e, hi)] < self.entries[(i, k, e, lo)]:
                            bad.append(("se", i, k, e, hi))
        return bad

    def se_scaling(self, layer: int) -> dict:
        """The four per-(k, e) relative runtime increases of the default
        (quarter-ratio) squeeze path."""
        return {(k, e): self.scaling[(layer, k, e, 0.25)]
                for k in KERNEL_CHOICES for e in EXPANSION_CHOICES}

    def lookup(self, layer: int, mbtype: MBConvType) -> float:
        if mbtype.skip:
            return 0.0
        return self.entries[(layer, mbtype.kernel, mbtype.expansion, mbtype.se)]

    def covers(self, config: SearchSpaceConfig) -> bool:
        return set(range(config.num_layers)) <= set(self.layers())

    def to_json(self) -> dict:
        rows = [{"layer": i, "k": k, "e": e, "se": se, "ms": ms}
                for (i, k, e, se), ms in sorted(self.entries.items())]
        return {"version": LUT_VERSION, "fixed_overhead_ms": self.fixed_overhead_ms,
                "entries": rows}

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json(), f, indent=1, sort_keys=True)
            f.write("\n")


def ingest_lut(path, reject_nonmonotone: bool = False) -> LatencyTable:
    """Load and validate a LUT json file.

    Incomplete tables are an error naming the first missing tuple. Monotonicity
    violations are kept with a warning by default, because measured runtimes
    may genuinely violate them; pass reject_nonmonotone to refuse instead.
    """
    try:
        with open(path) as f:
            obj = json.load(f)
    except FileNotFoundError as exc:
        raise ConfigError(f"latency table not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid json: {exc}") from exc
    if not isinstance(obj, dict) or obj.get("version") != LUT_VERSION:
        raise FormatError(f"{path}: expected a version-{LUT_VERSION} latency table")
    try:
        entries = {_entry_key(r["layer"], r["k"], r["e"], r["se"]): float(r["ms"])
                   for r in obj["entries"]}
        table = LatencyTable(entries, float(obj["fixed_overhead_ms"]))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: malformed latency table: {exc}") from exc
    bad = table.monotonicity_violations()
    if bad:
        if reject_nonmonotone:
            raise ConfigError(f"latency table violates monotonicity at {bad[:5]}"
                              f"{' ...' if len(bad) > 5 else ''}")
        warnings.warn(f"latency table kept despite {len(bad)} monotonicity "
                      f"violation(s), first: {bad[0]}", RuntimeWarning, stacklevel=2)
    return table


# ---------------------------------------------------------------------------
# synthetic generation


def _layer_macs(spec, h_in, h_out, k, e):
    """Analytic multiply-accumulate count of the main (non-SE) path."""
    c_e = e * spec.in_channels
    expand = h_in * h_in * c_e * spec.in_channels
    depthwise = h_out * h_out * k * k * c_e
    project = h_out * h_out * c_e * spec.out_channels
    return expand + depthwise + project


def _se_cost(spec, h_out, e, se):
    """Pool and gate sweep the feature map; the two 1x1 convs run on pooled
    vectors and are discounted accordingly."""
    if se == 0.0:
        return 0.0
    c_e = e * spec.in_channels
    n_se = int(round(se * MAX_EXPANSION * spec.in_channels))
    sweeps = 2.0 * h_out * h_out * c_e
    gemms = SE_POOLED_GEMM_FACTOR * 2.0 * n_se * c_e
    return sweeps + gemms


def lutgen(config: SearchSpaceConfig, seed: int = 0, noise: float = 0.0) -> LatencyTable:
    """Synthesize a latency table from analytic MAC counts.

    Entry = alpha * main_macs * (1 + se_fraction) * (1 + u) with u drawn
    uniformly from [-noise, noise] per entry. Deeper layers have more channels
    relative to spatial extent, which makes the squeeze-path overhead fraction
    shrink with depth.
    """
    if not 0.0 <= noise <= 0.2:
        raise ConfigError(f"lut noise must lie in [0, 0.2], got {noise}")
    rng = np.random.default_rng(seed)
    entries = {}
    for i, (spec, (h_in, h_out)) in enumerate(zip(config.layers, config.spatial_dims())):
        for k in KERNEL_CHOICES:
            for e in EXPANSION_CHOICES:
                main = _layer_macs(spec, h_in, h_out, k, e)
                for se in SE_CHOICES:
                    frac = _se_cost(spec, h_out, e, se) / main
                    u = rng.uniform(-noise, noise)
                    entries[(i, k, e, se)] = ALPHA_MS_PER_MAC * main * (1.0 + frac) * (1.0 + u)
    h_last = config.spatial_dims()[-1][1]
    h_stem = -(-config.image_size // config.stem_stride)
    stem = h_stem ** 2 * 9 * config.stem_channels
    head = h_last ** 2 * config.layers[-1].out_channels * config.head_channels \
        + config.head_channels * config.classes
    overhead = ALPHA_MS_PER_MAC * (stem + head)
    return LatencyTable(entries, overhead)


# ---------------------------------------------------------------------------
# the runtime model


def hard_indicators(mbtype: MBConvType) -> dict:
    """Binary decision values of a concrete type."""
    if mbtype.skip:
        return {"e3": 0.0, "e6": 0.0, "k5": 0.0, "se25": 0.0, "se50": 0.0}
    return {"e3": 1.0,
            "e6": 1.0 if mbtype.expansion == 6 else 0.0,
            "k5": 1.0 if mbtype.kernel == 5 else 0.0,
            "se25": 1.0 if mbtype.se > 0 else 0.0,
            "se50": 1.0 if mbtype.se == 0.5 else 0.0}


def layer_runtime(indicators: dict, table: LatencyTable, layer: int):
    """Runtime of one layer as a function of its five decision indicators.

    Nested form: the expansion decisions select between the measured e=3 and
    e=6 runtimes of the large kernel; the kernel decision rescales by the
    measured 3x3/5x5 ratio of the active expansion; the squeeze decisions
    apply the measured relative SE cost, blended between the two ratios. With
    0/1 indicators each branch collapses to the exact table entry.
    """
    if layer not in table.layers():
        raise ConfigError(f"latency table does not cover layer {layer}")
    t = table.entries
    a, b, c = indicators["e3"], indicators["e6"], indicators["k5"]
    d25, d50 = indicators["se25"], indicators["se50"]
    r553, r556 = t[(layer, 5, 3, 0.0)], t[(layer, 5, 6, 0.0)]
    r333, r336 = t[(layer, 3, 3, 0.0)], t[(layer, 3, 6, 0.0)]
    r_e = a * (r553 + b * (r556 - r553))
    ratio = b * (r336 / r556) + (1.0 - b) * (r333 / r553)
    r_ke = r_e * (ratio + (1.0 - ratio) * c)
    s = table.scaling

    def s_blend(se):
        s6 = c * s[(layer, 5, 6, se)] + (1.0 - c) * s[(layer, 3, 6, se)]
        s3 = c * s[(layer, 5, 3, se)] + (1.0 - c) * s[(layer, 3, 3, se)]
        return b * s6 + (1.0 - b) * s3

    s_eff = d50 * s_blend(0.5) + (1.0 - d50) * s_blend(0.25)
    return (1.0 - d25) * r_ke + d25 * s_eff * r_ke


def network_runtime(architecture_or_indicators, table: LatencyTable):
    """Fixed overhead plus the sum of per-layer runtimes.

    Accepts a decoded architecture (list of MBConvType; exact float result)
    or a list of per-layer indicator dicts (graph scalars; differentiable).
    """
    total = table.fixed_overhead_ms
    for i, item in enumerate(architecture_or_indicators):
        inds = hard_indicators(item) if isinstance(item, MBConvType) else item
        total = total + layer_runtime(inds, table, i)
    return total
