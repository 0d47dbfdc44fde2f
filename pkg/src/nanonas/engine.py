"""Latency-aware search loops and baselines.

`search` optimizes superkernel weights and thresholds jointly with plain
SGD — one optimizer step per batch, no phases. `search_bilevel` runs the
softmax encodings with alternating weight/architecture steps. Alongside:
rejection-sampling random search, fixed-network training, the solver
variance study, and the shared-kernel ablation.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Graph, Tensor
from .data import Dataset
from .errors import ConfigError, DivergenceError, InfeasibleError, NumericError
from .fixednet import FixedNet
from .latency import LatencyTable, network_runtime
from .searchspace import (DropoutSchedule, MBConvType, SearchSpaceConfig, Supernet,
                          draw_dropout_masks)
from .variants import MultiPathNet, SinglePathSoftmax, frozen

VARIANTS = ("single_sigmoid", "single_ste", "single_softmax", "multi_path_softmax", "random")
BILEVEL_VARIANTS = ("single_softmax", "multi_path_softmax")


# ---------------------------------------------------------------------------
# optimizer and schedules


class SGD:
    """Momentum SGD over named parameter groups; velocities keyed by name."""

    def __init__(self, groups, momentum: float = 0.9):
        # groups: list of dicts {params: [(name, Tensor)], lr_scale, weight_decay}
        self.groups = [{"params": g["params"],
                        "lr_scale": g.get("lr_scale", 1.0),
                        "weight_decay": g.get("weight_decay", 0.0)} for g in groups]
        self.momentum = momentum
        self.velocity = {}
        self.step_count = 0

    def zero_grad(self):
        for g in self.groups:
            for _, p in g["params"]:
                p.grad = None

    def step(self, lr: float):
        for g in self.groups:
            eff_lr = lr * g["lr_scale"]
            for name, p in g["params"]:
                if p.grad is None:
                    continue
                grad = p.grad
                if g["weight_decay"]:
                    grad = grad + g["weight_decay"] * p.data
                v = self.velocity.get(name)
                v = grad if v is None else self.momentum * v + grad
                self.velocity[name] = v
                p.data = p.data - eff_lr * v
                if not math.isfinite(float(p.data.sum())):
                    raise NumericError(f"non-finite update applied to parameter '{name}'")
        self.step_count += 1


def lr_at(step: int, total_steps: int, lr_max: float, warmup_frac: float = 0.1) -> float:
    warm = max(1, int(round(warmup_frac * total_steps)))
    if step < warm:
        return lr_max * (step + 1) / warm
    span = max(1, total_steps - warm)
    return 0.5 * lr_max * (1.0 + math.cos(math.pi * (step - warm) / span))


# ---------------------------------------------------------------------------
# configuration and report


@dataclass
class SearchConfig:
    lambda_: float = 0.0
    epochs: int = 8
    batch_size: int = 64
    lr_max: float = 0.05
    lr_warmup_frac: float = 0.1
    arch_lr: float = 0.05
    momentum: float = 0.9
    beta: float = 5.0
    dropout: DropoutSchedule = field(default_factory=DropoutSchedule)
    variant: str = "single_sigmoid"
    seed: int = 0
    proxy_epochs: int = 3
    threshold_lr_scale: float = 1.0
    threshold_weight_decay: float = 0.0
    steps_override: int = None   # truncate the step budget (0 allowed)

    def __post_init__(self):
        if self.lambda_ < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lambda_}")
        if self.epochs < 1:
            raise ConfigError(f"budget must be >= 1 epoch, got {self.epochs}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got '{self.variant}'")
        if isinstance(self.dropout, dict):
            self.dropout = DropoutSchedule(**self.dropout)

    def to_json(self):
        return {"lambda": self.lambda_, "epochs": self.epochs, "batch_size": self.batch_size,
                "lr_max": self.lr_max, "lr_warmup_frac": self.lr_warmup_frac,
                "arch_lr": self.arch_lr, "momentum": self.momentum, "beta": self.beta,
                "dropout_p0": self.dropout.p0,
                "dropout_warmup_fraction": self.dropout.warmup_fraction,
                "variant": self.variant, "seed": self.seed, "proxy_epochs": self.proxy_epochs,
                "threshold_lr_scale": self.threshold_lr_scale,
                "threshold_weight_decay": self.threshold_weight_decay}


@dataclass
class SearchReport:
    variant: str
    seed: int
    config: dict
    ce_trace: list = field(default_factory=list)
    runtime_trace: list = field(default_factory=list)
    loss_trace: list = field(default_factory=list)
    lr_trace: list = field(default_factory=list)
    dropout_trace: list = field(default_factory=list)
    lambda_trace: list = field(default_factory=list)
    architecture: list = None
    hard_runtime_ms: float = None
    proxy_accuracy: float = None
    runtime_active_from_step: int = 0
    audit: dict = field(default_factory=dict)
    wall_clock_s: float = 0.0
    step_times_s: list = field(default_factory=list)
    model: object = field(default=None, repr=False, compare=False)

    def to_artifact(self) -> dict:
        """Serializable form; volatile timing is deliberately excluded so
        emitted artifacts are byte-for-byte reproducible."""
        from .searchspace import architecture_to_json
        return {"variant": self.variant, "seed": self.seed, "config": self.config,
                "ce_trace": self.ce_trace, "runtime_trace": self.runtime_trace,
                "loss_trace": self.loss_trace, "lr_trace": self.lr_trace,
                "dropout_trace": self.dropout_trace, "lambda_trace": self.lambda_trace,
                "architecture": architecture_to_json(self.architecture),
                "hard_runtime_ms": self.hard_runtime_ms,
                "proxy_accuracy": self.proxy_accuracy,
                "runtime_active_from_step": self.runtime_active_from_step,
                "audit": self.audit}

    def save_log_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["step", "ce", "runtime_ms", "loss", "lr", "dropout_p"])
            for i in range(len(self.ce_trace)):
                w.writerow([i, repr(self.ce_trace[i]), repr(self.runtime_trace[i]),
                            repr(self.loss_trace[i]), repr(self.lr_trace[i]),
                            repr(self.dropout_trace[i])])


# ---------------------------------------------------------------------------
# shared loop plumbing


def loss(ce, runtime_ms, lam: float):
    """Cross-entropy plus lambda times log-runtime; total in both arguments."""
    if lam < 0:
        raise ConfigError(f"lambda must be >= 0, got {lam}")
    if isinstance(runtime_ms, Tensor):
        log_r = ad.log(runtime_ms)
        return ad.add(ce, ad.cmul(log_r, lam)) if isinstance(ce, Tensor) \
            else ad.cadd(ad.cmul(log_r, lam), ce)
    if runtime_ms <= 0:
        raise NumericError(f"runtime must be positive, got {runtime_ms}")
    term = lam * math.log(runtime_ms)
    return ad.cadd(ce, term) if isinstance(ce, Tensor) else ce + term


def _epoch_batches(rng, n: int, batch_size: int):
    order = rng.permutation(n)
    steps = max(1, n // batch_size)
    bs = min(batch_size, n)
    return [order[i * bs:(i + 1) * bs] for i in range(steps)]


def evaluate(forward, images: np.ndarray, labels: np.ndarray, batch_size: int = 256) -> float:
    correct = 0
    for i in range(0, len(labels), batch_size):
        logits = forward(Tensor(images[i:i + batch_size]))
        correct += int(np.sum(np.argmax(logits.data, axis=1) == labels[i:i + batch_size]))
    return correct / len(labels)


def _snapshot(params):
    return {name: p.data.copy() for name, p in params}


# ---------------------------------------------------------------------------
# fixed-network training


@dataclass
class TrainReport:
    accuracy: float
    step_times_s: list
    net: FixedNet = field(repr=False, compare=False, default=None)


def train_fixed(config: SearchSpaceConfig, architecture, dataset: Dataset, epochs: int,
                seed: int = 0, batch_size: int = 64, lr_max: float = 0.05,
                momentum: float = 0.9) -> TrainReport:
    """Train a compact network from scratch; returns validation accuracy."""
    net = FixedNet(config, architecture, seed=seed)
    opt = SGD([{"params": net.parameters()}], momentum=momentum)
    rng = np.random.default_rng([seed, 1])
    xtr, ytr = dataset.train
    total_steps = epochs * max(1, len(ytr) // batch_size)
    times = []
    step = 0
    for _ in range(epochs):
        for idx in _epoch_batches(rng, len(ytr), batch_size):
            t0 = time.perf_counter()
            opt.zero_grad()
            with Graph() as g:
                logits = net.forward(Tensor(xtr[idx]), training=True)
                ce = ad.cross_entropy(logits, ytr[idx])
                g.backward(ce)
            opt.step(lr_at(step, total_steps, lr_max))
            times.append(time.perf_counter() - t0)
            step += 1
    xv, yv = dataset.valid
    acc = evaluate(lambda x: net.forward(x, training=False), xv, yv)
    return TrainReport(accuracy=acc, step_times_s=times, net=net)


def proxy_accuracy(config, architecture, dataset, sc: SearchConfig) -> float:
    """Accuracy after the aggressively short schedule used to rank designs."""
    return train_fixed(config, architecture, dataset, epochs=sc.proxy_epochs,
                       seed=sc.seed, batch_size=sc.batch_size, lr_max=sc.lr_max,
                       momentum=sc.momentum).accuracy


# ---------------------------------------------------------------------------
# single-path search (joint gradient descent)


def search(config: SearchSpaceConfig, dataset: Dataset, table: LatencyTable,
           sc: SearchConfig) -> SearchReport:
    """Minimize CE + lambda*log(R) over weights and thresholds jointly.

    The runtime term activates once subset dropout has decayed to zero; the
    loss identity then holds with the scheduled (effective) lambda, which is
    logged per step.
    """
    if sc.variant not in ("single_sigmoid", "single_ste"):
        raise ConfigError(f"search() handles single-path variants, got '{sc.variant}'")
    if not table.covers(config):
        raise ConfigError("latency table does not cover the search space")
    mode = "sigmoid" if sc.variant == "single_sigmoid" else "ste"
    t_start = time.perf_counter()
    net = Supernet(config, seed=sc.seed, beta=sc.beta, mode=mode)
    opt = SGD([
        {"params": net.weight_parameters()},
        {"params": net.threshold_parameters(), "lr_scale": sc.threshold_lr_scale,
         "weight_decay": sc.threshold_weight_decay},
    ], momentum=sc.momentum)
    rng_data = np.random.default_rng([sc.seed, 1])
    rng_drop = np.random.default_rng([sc.seed, 2])
    xtr, ytr = dataset.train
    steps_per_epoch = max(1, len(ytr) // sc.batch_size)
    total_steps = sc.epochs * steps_per_epoch
    budget = total_steps if sc.steps_override is None else min(sc.steps_override, total_steps)
    warm = sc.dropout.warmup_steps(total_steps)
    report = SearchReport(variant=sc.variant, seed=sc.seed, config=sc.to_json(),
                          runtime_active_from_step=warm, model=net)
    last_good = _snapshot(net.parameters())
    step = 0
    done = False
    for _ in range(sc.epochs):
        if done:
            break
        for idx in _epoch_batches(rng_data, len(ytr), sc.batch_size):
            if step >= budget:
                done = True
                break
            t0 = time.perf_counter()
            p_drop = sc.dropout.p(step, total_steps)
            masks = draw_dropout_masks(rng_drop, p_drop, config.num_layers)
            lam_eff = sc.lambda_ if step >= warm else 0.0
            opt.zero_grad()
            try:
                with Graph() as g:
                    logits, inds, _ = net.forward(Tensor(xtr[idx]), training=True,
                                                  dropout_masks=masks)
                    ce = ad.cross_entropy(logits, ytr[idx])
                    runtime = network_runtime(inds, table)
                    total = loss(ce, runtime, lam_eff)
                    g.backward(total)
            except NumericError as exc:
                raise DivergenceError(
                    f"search diverged at step {step}: {exc}", checkpoint=last_good) from exc
            last_good = _snapshot(net.parameters())  # state that produced a finite loss
            lr = lr_at(step, total_steps, sc.lr_max, sc.lr_warmup_frac)
            try:
                opt.step(lr)
            except NumericError as exc:
                raise DivergenceError(
                    f"search diverged at step {step}: {exc}", checkpoint=last_good) from exc
            report.ce_trace.append(float(ce.data))
            report.runtime_trace.append(float(runtime.data))
            report.loss_trace.append(float(total.data))
            report.lr_trace.append(lr)
            report.dropout_trace.append(p_drop)
            report.lambda_trace.append(lam_eff)
            report.step_times_s.append(time.perf_counter() - t0)
            step += 1
    report.audit = {"batches": step, "optimizer_steps": opt.step_count,
                    "weight_phases": step, "frozen_weight_phases": 0}
    report.architecture = net.decode()
    report.hard_runtime_ms = float(network_runtime(report.architecture, table))
    if sc.proxy_epochs > 0:
        report.proxy_accuracy = proxy_accuracy(config, report.architecture, dataset, sc)
    report.wall_clock_s = time.perf_counter() - t_start
    return report


# ---------------------------------------------------------------------------
# bilevel search for the softmax encodings


def search_bilevel(config: SearchSpaceConfig, dataset: Dataset, table: LatencyTable,
                   sc: SearchConfig) -> SearchReport:
    """Alternate weight steps on the train split with architecture-logit steps
    on the validation split; decode by argmax."""
    if sc.variant not in BILEVEL_VARIANTS:
        raise ConfigError(f"search_bilevel handles {BILEVEL_VARIANTS}, got '{sc.variant}'")
    if not table.covers(config):
        raise ConfigError("latency table does not cover the search space")
    t_start = time.perf_counter()
    if sc.variant == "single_softmax":
        model = SinglePathSoftmax(Supernet(config, seed=sc.seed, beta=sc.beta), seed=sc.seed)
    else:
        model = MultiPathNet(config, seed=sc.seed)
    weight_params = model.weight_parameters()
    arch_params = model.arch_parameters()
    w_opt = SGD([{"params": weight_params}], momentum=sc.momentum)
    a_opt = SGD([{"params": arch_params}], momentum=sc.momentum)
    rng_tr = np.random.default_rng([sc.seed, 1])
    rng_va = np.random.default_rng([sc.seed, 3])
    xtr, ytr = dataset.train
    xva, yva = dataset.valid
    steps_per_epoch = max(1, len(ytr) // sc.batch_size)
    total_steps = sc.epochs * steps_per_epoch
    budget = total_steps if sc.steps_override is None else min(sc.steps_override, total_steps)
    warm = sc.dropout.warmup_steps(total_steps)
    report = SearchReport(variant=sc.variant, seed=sc.seed, config=sc.to_json(),
                          runtime_active_from_step=warm, model=model)
    max_arch_grad_in_w_phase = 0.0
    max_weight_grad_in_a_phase = 0.0
    step = 0
    done = False
    for _ in range(sc.epochs):
        if done:
            break
        for idx in _epoch_batches(rng_tr, len(ytr), sc.batch_size):
            if step >= budget:
                done = True
                break
            t0 = time.perf_counter()
            lam_eff = sc.lambda_ if step >= warm else 0.0
            # weight phase (train split), architecture logits frozen
            w_opt.zero_grad()
            a_opt.zero_grad()
            with frozen(arch_params):
                with Graph() as g:
                    logits = model.forward(Tensor(xtr[idx]), training=True)
                    ce = ad.cross_entropy(logits, ytr[idx])
                    runtime = model.expected_runtime(table)
                    total = loss(ce, runtime, lam_eff)
                    g.backward(total)
            max_arch_grad_in_w_phase = max(
                max_arch_grad_in_w_phase,
                max((0.0 if p.grad is None else float(np.max(np.abs(p.grad))))
                    for _, p in arch_params))
            w_opt.step(lr_at(step, total_steps, sc.lr_max, sc.lr_warmup_frac))
            # architecture phase (validation split), weights frozen
            vidx = rng_va.choice(len(yva), size=min(sc.batch_size, len(yva)), replace=False)
            w_opt.zero_grad()
            a_opt.zero_grad()
            with frozen(weight_params):
                with Graph() as g:
                    logits = model.forward(Tensor(xva[vidx]), training=True)
                    ce_v = ad.cross_entropy(logits, yva[vidx])
                    runtime = model.expected_runtime(table)
                    total = loss(ce_v, runtime, lam_eff)
                    g.backward(total)
            max_weight_grad_in_a_phase = max(
                max_weight_grad_in_a_phase,
                max((0.0 if p.grad is None else float(np.max(np.abs(p.grad))))
                    for _, p in weight_params))
            a_opt.step(sc.arch_lr)
            report.ce_trace.append(float(ce.data))
            report.runtime_trace.append(float(runtime.data))
            report.loss_trace.append(float(total.data))
            report.lr_trace.append(lr_at(step, total_steps, sc.lr_max, sc.lr_warmup_frac))
            report.dropout_trace.append(0.0)
            report.lambda_trace.append(lam_eff)
            report.step_times_s.append(time.perf_counter() - t0)
            step += 1
    report.audit = {"batches": step, "weight_steps": w_opt.step_count,
                    "arch_steps": a_opt.step_count,
                    "max_arch_grad_in_weight_phase": max_arch_grad_in_w_phase,
                    "max_weight_grad_in_arch_phase": max_weight_grad_in_a_phase}
    report.architecture = model.decode()
    report.hard_runtime_ms = float(network_runtime(report.architecture, table))
    if sc.proxy_epochs > 0:
        report.proxy_accuracy = proxy_accuracy(config, report.architecture, dataset, sc)
    report.wall_clock_s = time.perf_counter() - t_start
    return report


# ---------------------------------------------------------------------------
# random search baseline


def sample_architecture(rng, config: SearchSpaceConfig):
    """Uniform draw over each layer's valid candidate types."""
    return [config.valid_types(i)[rng.integers(0, len(config.valid_types(i)))]
            for i in range(config.num_layers)]


@dataclass
class RandomSearchResult:
    best_architecture: list
    best_accuracy: float
    best_runtime_ms: float
    accuracy_mean: float
    accuracy_std: float
    runtime_mean: float
    runtime_std: float
    acceptance_rate: float
    samples: list = field(default_factory=list)


def random_search(config: SearchSpaceConfig, table: LatencyTable, dataset: Dataset,
                  n_samples: int, runtime_window, sc: SearchConfig,
                  max_attempts: int = 20000) -> RandomSearchResult:
    """Rejection-sample architectures inside a runtime window, proxy-train the
    survivors, and report the best plus the sample statistics."""
    lo, hi = runtime_window
    if lo > hi:
        raise ConfigError(f"runtime window [{lo}, {hi}] is inverted")
    rng = np.random.default_rng([sc.seed, 4])
    accepted = []
    attempts = 0
    seen_lo, seen_hi = math.inf, -math.inf
    while len(accepted) < n_samples and attempts < max_attempts:
        arch = sample_architecture(rng, config)
        r = network_runtime(arch, table)
        seen_lo, seen_hi = min(seen_lo, r), max(seen_hi, r)
        attempts += 1
        if lo <= r <= hi:
            accepted.append((arch, r))
    if len(accepted) < n_samples:
        raise InfeasibleError(
            f"runtime window [{lo}, {hi}] ms: only {len(accepted)}/{n_samples} "
            f"architectures accepted after {attempts} attempts; achievable "
            f"runtimes observed in [{seen_lo:.4f}, {seen_hi:.4f}] ms")
    entries = []
    for i, (arch, r) in enumerate(accepted):
        sc_i = replace(sc, seed=sc.seed + 1000 * (i + 1))
        acc = train_fixed(config, arch, dataset, epochs=sc.proxy_epochs, seed=sc_i.seed,
                          batch_size=sc.batch_size, lr_max=sc.lr_max,
                          momentum=sc.momentum).accuracy
        entries.append({"architecture": arch, "runtime_ms": r, "accuracy": acc})
    accs = np.array([e["accuracy"] for e in entries])
    runtimes = np.array([e["runtime_ms"] for e in entries])
    best = int(np.argmax(accs))
    return RandomSearchResult(
        best_architecture=entries[best]["architecture"],
        best_accuracy=float(accs[best]), best_runtime_ms=float(runtimes[best]),
        accuracy_mean=float(accs.mean()), accuracy_std=float(accs.std()),
        runtime_mean=float(runtimes.mean()), runtime_std=float(runtimes.std()),
        acceptance_rate=len(accepted) / attempts, samples=entries)


# ---------------------------------------------------------------------------
# dispatch, variance study, ablation


def run_search(variant: str, config, dataset, table, sc: SearchConfig,
               runtime_window=None, n_random_samples: int = 10):
    """Run one solver variant; returns (proxy_accuracy, runtime_ms, report)."""
    sc = replace(sc, variant=variant)
    if variant in ("single_sigmoid", "single_ste"):
        rep = search(config, dataset, table, sc)
        return rep.proxy_accuracy, rep.hard_runtime_ms, rep
    if variant in BILEVEL_VARIANTS:
        rep = search_bilevel(config, dataset, table, sc)
        return rep.proxy_accuracy, rep.hard_runtime_ms, rep
    if variant == "random":
        if runtime_window is None:
            raise ConfigError("random variant needs a runtime window")
        res = random_search(config, table, dataset, n_random_samples, runtime_window, sc)
        return res.best_accuracy, res.best_runtime_ms, res
    raise ConfigError(f"unknown variant '{variant}'")


def variance_study(variants, n_runs: int, config, dataset, table, sc_base: SearchConfig,
                   runtime_window=None, n_random_samples: int = 10,
                   intra_samples: int = 20, workers: int = 1, seeds=None) -> dict:
    """Inter-run statistics over seeds 0..n-1 per variant; softmax variants
    additionally get intra-run statistics by sampling architectures from the
    best run's distribution and proxy-training them."""
    if n_runs < 2:
        raise ConfigError(f"variance study needs >= 2 runs, got {n_runs}")
    seeds = list(range(n_runs)) if seeds is None else list(seeds)
    if len(seeds) != n_runs:
        raise ConfigError(f"{n_runs} runs but {len(seeds)} seeds")
    results = {}

    def one(variant, i):
        sc = replace(sc_base, seed=seeds[i], variant=variant)
        return i, run_search(variant, config, dataset, table, sc,
                             runtime_window=runtime_window,
                             n_random_samples=n_random_samples)

    cells = {}
    for variant in variants:
        if variant not in VARIANTS:
            raise ConfigError(f"unknown variant '{variant}'")
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                runs = dict(pool.map(lambda i: one(variant, i), range(n_runs)))
        else:
            runs = dict(one(variant, i) for i in range(n_runs))
        per_seed = [{"seed": seeds[i], "accuracy": runs[i][0], "runtime_ms": runs[i][1]}
                    for i in sorted(runs)]
        accs = np.array([r["accuracy"] for r in per_seed])
        rts = np.array([r["runtime_ms"] for r in per_seed])
        cells[f"{variant}/inter"] = {
            "accuracy": {"mean": float(accs.mean()), "variance": float(accs.var())},
            "runtime_ms": {"mean": float(rts.mean()), "variance": float(rts.var())},
            "per_seed": per_seed}
        results[variant] = runs
        if variant in BILEVEL_VARIANTS:
            best_seed = max(runs, key=lambda s: runs[s][0])
            model = runs[best_seed][2].model
            rng = np.random.default_rng([sc_base.seed, 5, best_seed])
            sample_rows = []
            for j in range(intra_samples):
                arch = model.sample_architecture(rng)
                sc_j = replace(sc_base, seed=sc_base.seed + 7000 + j)
                acc = train_fixed(config, arch, dataset, epochs=sc_base.proxy_epochs,
                                  seed=sc_j.seed, batch_size=sc_base.batch_size,
                                  lr_max=sc_base.lr_max).accuracy
                sample_rows.append({"accuracy": acc,
                                    "runtime_ms": float(network_runtime(arch, table))})
            a = np.array([r["accuracy"] for r in sample_rows])
            r = np.array([r["runtime_ms"] for r in sample_rows])
            cells[f"{variant}/intra"] = {
                "accuracy": {"mean": float(a.mean()), "variance": float(a.var())},
                "runtime_ms": {"mean": float(r.mean()), "variance": float(r.var())},
                "from_seed": best_seed, "samples": sample_rows}
    return {"n_runs": n_runs, "variants": list(variants), "cells": cells}


def shared_subset_ablation(config: SearchSpaceConfig, dataset: Dataset, epochs: int,
                           seed: int = 0, batch_size: int = 64,
                           lr_max: float = 0.05) -> dict:
    """Standalone 3x3 and 5x5 networks versus one shared-kernel network whose
    per-batch losses are taken on both the inner and the full kernel, with
    gradients accumulated to the respective subsets before each update."""
    arch3 = [MBConvType(3, 6, 0.0)] * config.num_layers
    arch5 = [MBConvType(5, 6, 0.0)] * config.num_layers
    acc3 = train_fixed(config, arch3, dataset, epochs, seed=seed,
                       batch_size=batch_size, lr_max=lr_max).accuracy
    acc5 = train_fixed(config, arch5, dataset, epochs, seed=seed,
                       batch_size=batch_size, lr_max=lr_max).accuracy

    shared = FixedNet(config, arch5, seed=seed)
    opt = SGD([{"params": shared.parameters()}])
    rng = np.random.default_rng([seed, 1])
    xtr, ytr = dataset.train
    total_steps = epochs * max(1, len(ytr) // batch_size)
    step = 0
    for _ in range(epochs):
        for idx in _epoch_batches(rng, len(ytr), batch_size):
            opt.zero_grad()
            xb, yb = Tensor(xtr[idx]), ytr[idx]
            with Graph() as g:
                g.backward(ad.cross_entropy(shared.forward(xb, training=True,
                                                           inner_only=True), yb))
            with Graph() as g:
                g.backward(ad.cross_entropy(shared.forward(xb, training=True), yb))
            opt.step(lr_at(step, total_steps, lr_max))
            step += 1
    xv, yv = dataset.valid
    acc_shared3 = evaluate(lambda x: shared.forward(x, training=False, inner_only=True), xv, yv)
    acc_shared5 = evaluate(lambda x: shared.forward(x, training=False), xv, yv)
    return {"rows": [
        {"method": "standalone-3x3", "accuracy": acc3},
        {"method": "standalone-5x5", "accuracy": acc5},
        {"method": "shared-inference-3x3", "accuracy": acc_shared3},
        {"method": "shared-inference-5x5", "accuracy": acc_shared5},
    ], "epochs": epochs, "seed": seed}
