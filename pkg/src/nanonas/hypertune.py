"""Black-box optimization of the accuracy/runtime trade-off coefficient.

The reward is validation accuracy, penalized multiplicatively once predicted
runtime exceeds the target. Three tuners: Gaussian-process Bayesian
optimization with expected improvement over log-lambda, a multi-fidelity GP
that also chooses the training budget per evaluation, and seeded random
sampling. Every evaluation spends its budget whether it succeeds or not, so
budget accounting stays exact.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import qmc

from .errors import ConfigError, NumericError
from .searchspace import SearchSpaceConfig

DEFAULT_LAMBDA_BOUNDS = (1e-3, 1e2)
DEFAULT_BUDGETS = (2, 3, 4, 5, 6, 7, 8)
DEFAULT_FULL_BUDGET = 8
METHODS = ("bo", "mf", "random")


def reward(accuracy: float, runtime_ms: float, target_ms: float) -> float:
    """Accuracy, scaled by (runtime/target)^w with w = 0 under target, -1 over."""
    if accuracy < 0 or runtime_ms <= 0 or target_ms <= 0:
        raise ConfigError("reward needs accuracy >= 0 and positive runtimes")
    if runtime_ms <= target_ms:
        return accuracy
    return accuracy * (runtime_ms / target_ms) ** -1


@dataclass
class TradeoffSample:
    lambda_: float
    budget_epochs: int
    accuracy: float
    runtime_ms: float
    reward: float
    wall_clock_s: float = 0.0
    order: int = 0
    failed: bool = False

    def to_json(self, include_volatile: bool = False) -> dict:
        row = {"lambda": self.lambda_, "budget_epochs": self.budget_epochs,
               "accuracy": self.accuracy, "runtime_ms": self.runtime_ms,
               "reward": self.reward, "order": self.order, "failed": self.failed}
        if include_volatile:
            row["wall_clock_s"] = self.wall_clock_s
        return row


@dataclass
class HyperObjective:
    """Target runtime plus the evaluation backend mapping (lambda, budget)
    to achieved (accuracy, runtime_ms)."""

    target_ms: float
    evaluate: callable
    bounds: tuple = DEFAULT_LAMBDA_BOUNDS
    full_budget: int = DEFAULT_FULL_BUDGET

    def __post_init__(self):
        if self.target_ms <= 0:
            raise ConfigError("target runtime must be positive")


# ---------------------------------------------------------------------------
# Gaussian process regression


def _normal_pdf(z):
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def _normal_cdf(z):
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


class GPModel:
    """Squared-exponential GP with hyperparameters picked by maximum marginal
    likelihood over a fixed log-grid; exact Cholesky-based regression."""

    LENGTHSCALE_GRID = (0.05, 0.1, 0.2, 0.4, 0.8, 1.6)
    SIGNAL_VAR_GRID = (0.25, 1.0, 4.0)
    NOISE_VAR_GRID = (1e-6, 1e-4, 1e-2)
    JITTERS = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)

    def __init__(self):
        self.x = None
        self.y = None
        self._chol = None
        self._alpha = None
        self.hyper = None

    @property
    def n_observations(self):
        return 0 if self.y is None else len(self.y)

    def _kernel(self, a, b, lengthscales, signal_var):
        d = (a[:, None, :] - b[None, :, :]) / lengthscales[None, None, :]
        return signal_var * np.exp(-0.5 * np.sum(d * d, axis=2))

    def _chol_with_jitter(self, k):
        for jitter in self.JITTERS:
            try:
                return np.linalg.cholesky(k + jitter * np.eye(len(k))), jitter
            except np.linalg.LinAlgError:
                continue
        raise NumericError("GP covariance not positive definite after jitter escalation")

    def fit(self, x: np.ndarray, y: np.ndarray) -> None:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[0] < len(np.ravel(y)):
            x = x.T
        y = np.asarray(y, dtype=np.float64).ravel()
        if len(y) < 1:
            raise ConfigError("GP fit needs at least one sample")
        self.x = x
        self.y = y
        self._ymean = float(y.mean())
        self._ystd = float(y.std()) or 1.0
        yn = (y - self._ymean) / self._ystd
        ranges = np.maximum(x.max(axis=0) - x.min(axis=0), 1e-3)
        best = None
        for ls in self.LENGTHSCALE_GRID:
            lengthscales = ls * ranges * math.sqrt(x.shape[1])
            for sv in self.SIGNAL_VAR_GRID:
                k_base = self._kernel(x, x, lengthscales, sv)
                for nv in self.NOISE_VAR_GRID:
                    k = k_base + nv * np.eye(len(yn))
                    try:
                        chol, _ = self._chol_with_jitter(k)
                    except NumericError:
                        continue
                    alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, yn))
                    ml = (-0.5 * float(yn @ alpha)
                          - float(np.sum(np.log(np.diag(chol))))
                          - 0.5 * len(yn) * math.log(2 * math.pi))
                    if best is None or ml > best[0]:
                        best = (ml, lengthscales, sv, nv, chol, alpha)
        if best is None:
            raise NumericError("GP covariance not positive definite after jitter escalation")
        _, lengthscales, sv, nv, chol, alpha = best
        self.hyper = {"lengthscales": lengthscales, "signal_var": sv, "noise_var": nv}
        self._chol = chol
        self._alpha = alpha

    def predict(self, xq: np.ndarray):
        """Posterior mean and variance (original units) at query points."""
        if self._chol is None:
            raise ConfigError("GP predict requires at least one fitted sample")
        xq = np.atleast_2d(np.asarray(xq, dtype=np.float64))
        if xq.shape[1] != self.x.shape[1]:
            xq = xq.T
        ks = self._kernel(self.x, xq, self.hyper["lengthscales"], self.hyper["signal_var"])
        mean_n = ks.T @ self._alpha
        v = np.linalg.solve(self._chol, ks)
        var_n = self.hyper["signal_var"] + self.hyper["noise_var"] - np.sum(v * v, axis=0)
        mean = mean_n * self._ystd + self._ymean
        var = np.maximum(var_n, 0.0) * self._ystd ** 2
        return mean, var


def gp_fit(samples_x, samples_y) -> GPModel:
    model = GPModel()
    model.fit(np.asarray(samples_x), np.asarray(samples_y))
    return model


def gp_predict(model: GPModel, query_x):
    return model.predict(np.asarray(query_x))


def expected_improvement(mean, var, best: float):
    """EI for maximization; zero wherever the posterior is (near) certain."""
    std = np.sqrt(np.maximum(var, 0.0))
    ei = np.zeros_like(mean)
    improve = mean - best
    pos = std > 1e-12
    z = np.where(pos, improve / np.where(pos, std, 1.0), 0.0)
    ei[pos] = (improve[pos] * np.vectorize(_normal_cdf)(z[pos])
               + std[pos] * np.vectorize(_normal_pdf)(z[pos]))
    ei[~pos] = np.maximum(improve[~pos], 0.0) * 0.0
    return ei


def _log_grid(bounds, seed: int, n: int = 1024):
    lo, hi = math.log(bounds[0]), math.log(bounds[1])
    u = qmc.Sobol(d=1, scramble=True, seed=seed).random(n)[:, 0]
    return lo + (hi - lo) * u


def bo_suggest(model: GPModel, bounds=DEFAULT_LAMBDA_BOUNDS,
               acquisition: str = "expected_improvement", seed: int = 0) -> float:
    """Next lambda: EI argmax over a seeded quasi-random grid in log-space;
    with no observations, a seeded uniform draw."""
    if acquisition != "expected_improvement":
        raise ConfigError(f"unsupported acquisition '{acquisition}'")
    if model is None or model.n_observations == 0:
        rng = np.random.default_rng(seed)
        return float(math.exp(rng.uniform(math.log(bounds[0]), math.log(bounds[1]))))
    grid = _log_grid(bounds, seed)
    mean, var = model.predict(grid[:, None])
    ei = expected_improvement(mean, var, float(np.max(model.y)))
    return float(math.exp(grid[int(np.argmax(ei))]))


def multifidelity_suggest(model: GPModel, bounds=DEFAULT_LAMBDA_BOUNDS,
                          budgets=DEFAULT_BUDGETS, seed: int = 0):
    """Next (lambda, budget): EI against the incumbent's predicted value at the
    top fidelity, divided by the candidate's budget cost."""
    budgets = tuple(sorted(budgets))
    if model is None or model.n_observations == 0:
        rng = np.random.default_rng(seed)
        lam = float(math.exp(rng.uniform(math.log(bounds[0]), math.log(bounds[1]))))
        return lam, budgets[0]
    grid = _log_grid(bounds, seed)
    top = float(budgets[-1])
    observed_top = np.column_stack([model.x[:, 0], np.full(len(model.y), top)])
    mean_top, _ = model.predict(observed_top)
    best_top = float(np.max(mean_top))
    best_score, best_pair = -math.inf, None
    for b in budgets:
        xq = np.column_stack([grid, np.full(len(grid), float(b))])
        mean, var = model.predict(xq)
        score = expected_improvement(mean, var, best_top) / float(b)
        i = int(np.argmax(score))
        if score[i] > best_score:
            best_score, best_pair = float(score[i]), (float(math.exp(grid[i])), int(b))
    return best_pair


# ---------------------------------------------------------------------------
# the tuning loop


@dataclass
class HypertuneResult:
    method: str
    target_ms: float
    total_budget: int
    samples: list = field(default_factory=list)
    incumbent: list = field(default_factory=list)

    @property
    def best(self) -> TradeoffSample:
        return max(self.samples, key=lambda s: s.reward)

    def to_json(self, include_volatile: bool = False) -> dict:
        return {"method": self.method, "target_ms": self.target_ms,
                "total_budget": self.total_budget,
                "samples": [s.to_json(include_volatile) for s in self.samples],
                "incumbent": self.incumbent,
                "best": self.best.to_json(include_volatile)}


def hypertune(method: str, total_epoch_budget: int, objective: HyperObjective,
              seed: int = 0, budgets=DEFAULT_BUDGETS) -> HypertuneResult:
    """Suggest/evaluate/update until the epoch budget is exhausted.

    Failed evaluations keep their slot with reward zero so that the sum of
    sample budgets accounts for the full spend exactly.
    """
    if method not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}, got '{method}'")
    min_cost = min(budgets) if method == "mf" else objective.full_budget
    if total_epoch_budget < min_cost:
        raise ConfigError(
            f"budget {total_epoch_budget} is smaller than one evaluation "
            f"({min_cost} epochs): the trace would be empty")
    rng = np.random.default_rng(seed)
    result = HypertuneResult(method=method, target_ms=objective.target_ms,
                             total_budget=total_epoch_budget)
    remaining = total_epoch_budget
    model = GPModel()
    xs, ys = [], []
    order = 0
    while True:
        if method == "random":
            lam = float(math.exp(rng.uniform(math.log(objective.bounds[0]),
                                             math.log(objective.bounds[1]))))
            budget = objective.full_budget
        elif method == "bo":
            lam = bo_suggest(model if xs else None, objective.bounds,
                             seed=seed + 17 * order)
            budget = objective.full_budget
        else:
            allowed = tuple(b for b in budgets if b <= remaining)
            if not allowed:
                break
            lam, budget = multifidelity_suggest(model if xs else None, objective.bounds,
                                                budgets=allowed, seed=seed + 17 * order)
        if budget > remaining:
            break
        t0 = time.perf_counter()
        failed = False
        try:
            accuracy, runtime_ms = objective.evaluate(lam, budget)
            r = reward(accuracy, runtime_ms, objective.target_ms)
        except Exception:
            accuracy, runtime_ms, r = 0.0, float("inf"), 0.0
            failed = True
        sample = TradeoffSample(lambda_=lam, budget_epochs=budget, accuracy=accuracy,
                                runtime_ms=runtime_ms, reward=r,
                                wall_clock_s=time.perf_counter() - t0,
                                order=order, failed=failed)
        result.samples.append(sample)
        result.incumbent.append(max(s.reward for s in result.samples))
        remaining -= budget
        order += 1
        if method in ("bo", "mf") and not failed:
            if method == "bo":
                xs.append([math.log(lam)])
            else:
                xs.append([math.log(lam), float(budget)])
            ys.append(r)
            model = gp_fit(np.array(xs), np.array(ys))
        if remaining < (min(budgets) if method == "mf" else objective.full_budget):
            break
    return result


def grid_study(lambdas, budgets, objective: HyperObjective) -> dict:
    """Evaluate every (lambda, budget) cell; rows are budgets."""
    lambdas = [float(l) for l in lambdas]
    budgets = [int(b) for b in budgets]
    if not lambdas or not budgets:
        raise ConfigError("grid study needs non-empty lambda and budget grids")
    rewards = []
    for b in budgets:
        row = []
        for lam in lambdas:
            accuracy, runtime_ms = objective.evaluate(lam, b)
            row.append(reward(accuracy, runtime_ms, objective.target_ms))
        rewards.append(row)
    return {"lambdas": lambdas, "budgets": budgets, "rewards": rewards}


def save_grid_csv(path, result: dict) -> None:
    with open(path, "w", newline="") as f:
        f.write("budget\\lambda," + ",".join(repr(l) for l in result["lambdas"]) + "\n")
        for b, row in zip(result["budgets"], result["rewards"]):
            f.write(str(b) + "," + ",".join(repr(v) for v in row) + "\n")


# ---------------------------------------------------------------------------
# evaluation backends


def synthetic_backend(target_ms: float = 80.0, fidelity_shift: float = 0.0,
                      fidelity_drop: float = 0.0, budgets=DEFAULT_BUDGETS):
    """Analytic stand-in for a NAS evaluation.

    Runtime falls and accuracy falls as lambda grows; the reward therefore
    peaks where runtime first meets the target. A positive fidelity_shift
    moves the accuracy knee toward larger lambda at low budgets, making cheap
    evaluations overshoot toward over-constrained designs.
    """
    b_lo, b_hi = min(budgets), max(budgets)

    def sig(z):
        return 1.0 / (1.0 + math.exp(-z))

    def evaluate(lam: float, budget: int):
        l = math.log(lam)
        runtime = 45.0 + 75.0 * sig(-(l - 0.3) / 0.8)
        low = (b_hi - budget) / max(1, b_hi - b_lo)
        knee = 1.2 + fidelity_shift * low
        accuracy = 0.55 + 0.40 * sig(-(l - knee) / 1.0) - fidelity_drop * low
        return max(accuracy, 0.01), runtime

    return evaluate


def search_backend(config: SearchSpaceConfig, dataset, table, sc_base):
    """Each evaluation is a full NAS search at the given lambda and budget,
    scored by proxy accuracy of the decoded network and its predicted runtime."""
    from .engine import search

    def evaluate(lam: float, budget: int):
        sc = replace(sc_base, lambda_=lam, epochs=int(budget))
        rep = search(config, dataset, table, sc)
        return rep.proxy_accuracy, rep.hard_runtime_ms

    return evaluate
