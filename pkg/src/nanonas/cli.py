"""Operator-facing command line.

Every command takes --seed, writes machine-readable artifacts to --out, and
prints a short human summary to stdout. Artifact bytes depend only on flags
and seed (volatile timing never lands in a file). Exit codes: 0 success,
2 configuration error, 3 numeric error, 4 infeasible constraint; stderr
carries the underlying module error verbatim.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .data import load_idx, synth_classification
from .engine import (SearchConfig, random_search, search, search_bilevel,
                     shared_subset_ablation, train_fixed, variance_study)
from .errors import ConfigError, InfeasibleError, NanonasError, NumericError
from .hypertune import (DEFAULT_BUDGETS, HyperObjective, grid_study, hypertune,
                        save_grid_csv, search_backend, synthetic_backend)
from .latency import ingest_lut, lutgen, network_runtime
from .searchspace import (SearchSpaceConfig, Supernet, architecture_to_json,
                          load_architecture, save_architecture)
from .serialization import dump_json, load_checkpoint, save_checkpoint

BILEVEL = ("single_softmax", "multi_path_softmax")


def _load_config(path) -> SearchSpaceConfig:
    try:
        with open(path) as f:
            return SearchSpaceConfig.from_json(json.load(f))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid json: {exc}") from exc


def _load_dataset(spec: str, config: SearchSpaceConfig, n: int, seed: int):
    if spec == "synthetic":
        return synth_classification(classes=config.classes, n=n,
                                    image_size=config.image_size, seed=seed)
    if spec.startswith("idx:"):
        parts = spec[4:].split(",")
        if len(parts) != 2:
            raise ConfigError("--data idx form is idx:<images_path>,<labels_path>")
        return load_idx(parts[0], parts[1], seed=seed)
    raise ConfigError(f"unknown --data source '{spec}'")


def _search_config(args) -> SearchConfig:
    return SearchConfig(lambda_=args.lambda_, epochs=args.epochs,
                        batch_size=args.batch_size, variant=args.variant,
                        seed=args.seed, proxy_epochs=args.proxy_epochs,
                        steps_override=args.steps)


def _run_search(config, dataset, table, sc):
    if sc.variant in BILEVEL:
        return search_bilevel(config, dataset, table, sc)
    return search(config, dataset, table, sc)


# ---------------------------------------------------------------------------
# subcommands


def cmd_lutgen(args):
    config = _load_config(args.config)
    table = lutgen(config, seed=args.seed, noise=args.noise)
    table.save(args.out)
    print(f"wrote latency table for {config.num_layers} layers "
          f"(overhead {table.fixed_overhead_ms:.4f} ms) to {args.out}")
    return 0


def cmd_search(args):
    config = _load_config(args.config)
    dataset = _load_dataset(args.data, config, args.data_n, args.data_seed)
    table = ingest_lut(args.lut) if args.lut else lutgen(config, seed=args.data_seed)
    sc = _search_config(args)
    report = _run_search(config, dataset, table, sc)
    if args.out:
        dump_json(args.out, report.to_artifact())
    if args.log:
        report.save_log_csv(args.log)
    if args.checkpoint:
        if sc.variant in BILEVEL:
            raise ConfigError("checkpoints cover the threshold supernet variants only")
        save_checkpoint(args.checkpoint, report.model.state_arrays())
    arch = ", ".join(str(t) for t in report.architecture)
    print(f"decoded architecture: [{arch}]")
    print(f"predicted runtime: {report.hard_runtime_ms:.4f} ms")
    if report.proxy_accuracy is not None:
        print(f"proxy accuracy: {report.proxy_accuracy:.4f}")
    return 0


def cmd_derive(args):
    config = _load_config(args.config)
    net = Supernet(config, seed=args.seed)
    net.load_state_arrays(load_checkpoint(args.checkpoint))
    arch = net.decode()
    if args.out:
        save_architecture(args.out, arch)
    print("decoded architecture: [" + ", ".join(str(t) for t in arch) + "]")
    return 0


def cmd_train(args):
    config = _load_config(args.config)
    dataset = _load_dataset(args.data, config, args.data_n, args.data_seed)
    arch = load_architecture(args.arch)
    rep = train_fixed(config, arch, dataset, epochs=args.epochs, seed=args.seed,
                      batch_size=args.batch_size)
    if args.out:
        dump_json(args.out, {"accuracy": rep.accuracy, "epochs": args.epochs,
                             "seed": args.seed,
                             "architecture": architecture_to_json(arch)})
    print(f"validation accuracy after {args.epochs} epochs: {rep.accuracy:.4f}")
    return 0


def cmd_latency(args):
    table = ingest_lut(args.lut)
    arch = load_architecture(args.arch)
    runtime = network_runtime(arch, table)
    if args.out:
        dump_json(args.out, {"runtime_ms": runtime,
                             "architecture": architecture_to_json(arch)})
    print(f"{runtime:.6f}")
    return 0


def cmd_random_search(args):
    config = _load_config(args.config)
    dataset = _load_dataset(args.data, config, args.data_n, args.data_seed)
    table = ingest_lut(args.lut)
    sc = _search_config(args)
    res = random_search(config, table, dataset, n_samples=args.samples,
                        runtime_window=tuple(args.window), sc=sc)
    if args.out:
        dump_json(args.out, {
            "window_ms": list(args.window), "n_samples": args.samples,
            "acceptance_rate": res.acceptance_rate,
            "accuracy": {"mean": res.accuracy_mean, "std": res.accuracy_std},
            "runtime_ms": {"mean": res.runtime_mean, "std": res.runtime_std},
            "best": {"accuracy": res.best_accuracy, "runtime_ms": res.best_runtime_ms,
                     "architecture": architecture_to_json(res.best_architecture)},
            "samples": [{"accuracy": s["accuracy"], "runtime_ms": s["runtime_ms"],
                         "architecture": architecture_to_json(s["architecture"])}
                        for s in res.samples]})
    print(f"accepted {args.samples} samples (rate {res.acceptance_rate:.3f}); "
          f"best accuracy {res.best_accuracy:.4f} at {res.best_runtime_ms:.3f} ms; "
          f"mean {res.accuracy_mean:.4f} +- {res.accuracy_std:.4f}")
    return 0


def cmd_variance_study(args):
    config = _load_config(args.config)
    dataset = _load_dataset(args.data, config, args.data_n, args.data_seed)
    table = ingest_lut(args.lut)
    sc = _search_config(args)
    window = tuple(args.window) if args.window else None
    out = variance_study(args.variants.split(","), args.runs, config, dataset, table,
                         sc, runtime_window=window, n_random_samples=args.samples,
                         intra_samples=args.intra_samples, workers=args.workers)
    if args.out:
        dump_json(args.out, out)
    for name in sorted(out["cells"]):
        cell = out["cells"][name]
        print(f"{name}: accuracy {cell['accuracy']['mean']:.4f} "
              f"(var {cell['accuracy']['variance']:.2e}), runtime "
              f"{cell['runtime_ms']['mean']:.3f} ms (var {cell['runtime_ms']['variance']:.2e})")
    return 0


def cmd_ablation(args):
    config = _load_config(args.config)
    dataset = _load_dataset(args.data, config, args.data_n, args.data_seed)
    out = shared_subset_ablation(config, dataset, epochs=args.epochs, seed=args.seed,
                                 batch_size=args.batch_size)
    if args.out:
        dump_json(args.out, out)
    for row in out["rows"]:
        print(f"{row['method']:>24}: {row['accuracy']:.4f}")
    return 0


def _objective_from_args(args):
    if args.backend == "synthetic":
        return HyperObjective(target_ms=args.target_ms,
                              evaluate=synthetic_backend(
                                  target_ms=args.target_ms,
                                  fidelity_shift=args.fidelity_shift,
                                  fidelity_drop=args.fidelity_drop))
    config = _load_config(args.config)
    dataset = _load_dataset(args.data, config, args.data_n, args.data_seed)
    table = ingest_lut(args.lut)
    sc = SearchConfig(epochs=8, batch_size=args.batch_size, seed=args.seed,
                      proxy_epochs=args.proxy_epochs)
    return HyperObjective(target_ms=args.target_ms,
                          evaluate=search_backend(config, dataset, table, sc))


def cmd_hypertune(args):
    objective = _objective_from_args(args)
    result = hypertune(args.method, args.budget_epochs, objective, seed=args.seed,
                       budgets=tuple(DEFAULT_BUDGETS))
    if args.out:
        dump_json(args.out, result.to_json())
    best = result.best
    print(f"{args.method}: best reward {best.reward:.4f} at lambda {best.lambda_:.5g} "
          f"(accuracy {best.accuracy:.4f}, runtime {best.runtime_ms:.3f} ms) "
          f"over {len(result.samples)} evaluations")
    return 0


def cmd_grid_study(args):
    objective = _objective_from_args(args)
    out = grid_study([float(v) for v in args.lambdas.split(",")],
                     [int(v) for v in args.budgets.split(",")], objective)
    if args.out:
        save_grid_csv(args.out, out)
    rows = np.asarray(out["rewards"])
    for b, row in zip(out["budgets"], rows):
        best = int(np.argmax(row))
        print(f"budget {b}: best lambda {out['lambdas'][best]:.5g} "
              f"(reward {row[best]:.4f})")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_common(p, config_required=True):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="machine-readable output path")
    if config_required:
        p.add_argument("--config", required=True, help="search-space config json")


def _add_data(p):
    p.add_argument("--data", default="synthetic",
                   help="'synthetic' or 'idx:<images_path>,<labels_path>'")
    p.add_argument("--data-n", type=int, default=2000,
                   help="synthetic dataset size")
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=64)


def _add_search_knobs(p):
    p.add_argument("--lambda", dest="lambda_", type=float, default=0.0)
    p.add_argument("--epochs", type=int, default=8)
    p.add_argument("--steps", type=int, default=None,
                   help="truncate to this many optimizer steps")
    p.add_argument("--variant", default="single_sigmoid")
    p.add_argument("--proxy-epochs", type=int, default=3)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nanonas",
        description="Differentiable architecture search over masked superkernels")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("lutgen", help="synthesize a latency lookup table")
    _add_common(p)
    p.add_argument("--noise", type=float, default=0.0)
    p.set_defaults(fn=cmd_lutgen)

    p = sub.add_parser("search", help="run the latency-aware search")
    _add_common(p)
    _add_data(p)
    _add_search_knobs(p)
    p.add_argument("--lut", default=None, help="latency table json (default: synthetic)")
    p.add_argument("--log", default=None, help="per-step csv log path")
    p.add_argument("--checkpoint", default=None, help="write final weights+thresholds")
    p.set_defaults(fn=cmd_search)

    p = sub.add_parser("derive", help="decode an architecture from a checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(fn=cmd_derive)

    p = sub.add_parser("train", help="train a fixed architecture from scratch")
    _add_common(p)
    _add_data(p)
    p.add_argument("--arch", required=True, help="architecture json")
    p.add_argument("--epochs", type=int, default=8)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("latency", help="predicted runtime of an architecture")
    _add_common(p, config_required=False)
    p.add_argument("--arch", required=True)
    p.add_argument("--lut", required=True)
    p.set_defaults(fn=cmd_latency)

    p = sub.add_parser("random-search", help="rejection-sampling baseline")
    _add_common(p)
    _add_data(p)
    _add_search_knobs(p)
    p.add_argument("--lut", required=True)
    p.add_argument("--samples", type=int, default=10)
    p.add_argument("--window", type=float, nargs=2, required=True,
                   metavar=("LO_MS", "HI_MS"))
    p.set_defaults(fn=cmd_random_search)

    p = sub.add_parser("variance-study", help="solver variance across seeds")
    _add_common(p)
    _add_data(p)
    _add_search_knobs(p)
    p.add_argument("--lut", required=True)
    p.add_argument("--variants", default="single_sigmoid,single_ste,single_softmax,"
                                         "multi_path_softmax,random")
    p.add_argument("--runs", type=int, default=20)
    p.add_argument("--samples", type=int, default=10, help="random-variant samples")
    p.add_argument("--intra-samples", type=int, default=20)
    p.add_argument("--window", type=float, nargs=2, default=None,
                   metavar=("LO_MS", "HI_MS"))
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=cmd_variance_study)

    p = sub.add_parser("ablation", help="shared-kernel vs standalone training")
    _add_common(p)
    _add_data(p)
    p.add_argument("--epochs", type=int, default=6)
    p.set_defaults(fn=cmd_ablation)

    p = sub.add_parser("hypertune", help="tune the trade-off coefficient")
    _add_common(p, config_required=False)
    _add_data(p)
    p.add_argument("--config", default=None)
    p.add_argument("--lut", default=None)
    p.add_argument("--method", choices=("bo", "mf", "random"), required=True)
    p.add_argument("--target-ms", type=float, required=True)
    p.add_argument("--budget-epochs", type=int, required=True)
    p.add_argument("--backend", choices=("real", "synthetic"), default="real")
    p.add_argument("--proxy-epochs", type=int, default=3)
    p.add_argument("--fidelity-shift", type=float, default=0.0)
    p.add_argument("--fidelity-drop", type=float, default=0.0)
    p.set_defaults(fn=cmd_hypertune)

    p = sub.add_parser("grid-study", help="reward over a lambda x budget grid")
    _add_common(p, config_required=False)
    _add_data(p)
    p.add_argument("--config", default=None)
    p.add_argument("--lut", default=None)
    p.add_argument("--lambdas", required=True, help="comma-separated lambda grid")
    p.add_argument("--budgets", required=True, help="comma-separated epoch budgets")
    p.add_argument("--target-ms", type=float, required=True)
    p.add_argument("--backend", choices=("real", "synthetic"), default="real")
    p.add_argument("--proxy-epochs", type=int, default=3)
    p.add_argument("--fidelity-shift", type=float, default=0.0)
    p.add_argument("--fidelity-drop", type=float, default=0.0)
    p.set_defaults(fn=cmd_grid_study)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "backend", None) == "real" and args.command in ("hypertune", "grid-study"):
        if not args.config or not args.lut:
            print("the real backend needs --config and --lut", file=sys.stderr)
            return 2
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except NumericError as exc:
        print(str(exc), file=sys.stderr)
        return 3
    except InfeasibleError as exc:
        print(str(exc), file=sys.stderr)
        return 4
    except NanonasError as exc:
        print(str(exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
