"""Command-line interface.

Subcommands: ingest, appr, train, eval, run, stats, bench. Errors from
the package exit nonzero and print a one-line JSON record with a
machine-readable category to stderr (config=2, parse=3, domain=4,
numerical=5, other=1).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import available_backends, default_backend
from .appr import ApprParams, build_appr_matrix, load_appr_matrix, save_appr_matrix
from .config import load_config
from .datasets import ingest_canonical, ingest_content_cites, ingest_npz
from .errors import ConfigurationError, PushnetError
from .graph import NormalizationKind, normalize_adjacency
from .lpmp import lpmp_propagate
from .neural import Model, load_checkpoint, predict_labels, save_checkpoint
from .pipeline import (
    SplitSpec,
    bench_variants,
    build_scale_set,
    evaluate,
    khop_coverage_stats,
    model_spec_from_config,
    prepare_dataset,
    run_experiment,
    sample_split,
    write_reports,
)
from .propagation import PropagationCache, propagate
from .training import train_model


def _config_overrides(args) -> dict:
    keys = ("data_dir", "variant", "scales", "epsilon", "norm", "aggregator",
            "hidden", "learning_rate", "dropout", "l2", "max_epochs",
            "n_splits", "n_inits", "split_seed", "init_seed",
            "train_per_class", "val_count", "workers", "backend",
            "appr_dir", "out_dir")
    return {k: getattr(args, k, None) for k in keys if getattr(args, k, None) is not None}


def _add_config_options(p: argparse.ArgumentParser, with_data: bool = True):
    if with_data:
        p.add_argument("--data", dest="data_dir", help="canonical dataset directory")
    p.add_argument("--config", help="config file (key = value lines)")
    p.add_argument("--variant", choices=("full", "ptp", "pp", "tpp"))
    p.add_argument("--scales", help="comma-separated restart probabilities, nonincreasing")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--norm", choices=("sym", "rw"))
    p.add_argument("--aggregator", choices=("sum", "max", "cat"))
    p.add_argument("--hidden")
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--dropout", type=float)
    p.add_argument("--l2", type=float)
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--split-seed", dest="split_seed", type=int)
    p.add_argument("--init-seed", dest="init_seed", type=int)
    p.add_argument("--train-per-class", dest="train_per_class", type=int)
    p.add_argument("--val-count", dest="val_count", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--backend", choices=("python", "cython"))
    p.add_argument("--appr-dir", dest="appr_dir")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pushnet",
        description="Push-based graph propagation and node classification toolkit")
    parser.add_argument("--version", action="version",
                        version=f"pushnet {__version__} "
                                f"(backend {default_backend()}, available: "
                                f"{', '.join(available_backends())})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="convert raw dataset files to canonical form")
    p.add_argument("--format", required=True, choices=("canonical", "content-cites", "npz"))
    p.add_argument("--out-dir", required=True)
    p.add_argument("--edges", help="edge-list file (canonical format)")
    p.add_argument("--features", help="feature file (canonical format)")
    p.add_argument("--labels", help="label file (canonical format)")
    p.add_argument("--dense-csv", action="store_true", help="features file is dense CSV")
    p.add_argument("--content", help=".content file (content-cites format)")
    p.add_argument("--cites", help=".cites file (content-cites format)")
    p.add_argument("--npz", help=".npz bundle")

    p = sub.add_parser("appr", help="build and persist push matrices")
    p.add_argument("--data", dest="data_dir", required=True)
    p.add_argument("--alpha", type=float, action="append", required=True)
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--norm", choices=("sym", "rw"), default="sym")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--backend", choices=("python", "cython"))
    p.add_argument("--max-pushes", type=int, default=10_000_000)

    p = sub.add_parser("train", help="single training run")
    _add_config_options(p)
    p.add_argument("--seed", type=int, help="shorthand for --init-seed")
    p.add_argument("--split-index", type=int, default=0)
    p.add_argument("--checkpoint", help="where to save the trained model")
    p.add_argument("--metrics", help="where to write the metrics JSON")

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_config_options(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split-index", type=int, default=0)
    p.add_argument("--on", choices=("train", "val", "test"), default="test")
    p.add_argument("--metrics", help="where to write the metrics JSON")

    p = sub.add_parser("run", help="full multi-run experiment")
    _add_config_options(p)
    p.add_argument("--n-splits", dest="n_splits", type=int)
    p.add_argument("--n-inits", dest="n_inits", type=int)
    p.add_argument("--out-dir", dest="out_dir")

    p = sub.add_parser("stats", help="hop-coverage statistics and push checks")
    p.add_argument("--data", dest="data_dir", required=True)
    p.add_argument("--alpha", type=float, action="append")
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--norm", choices=("sym", "rw"), default="sym")
    p.add_argument("--out-dir")
    p.add_argument("--per-source", action="store_true",
                   help="also write per-source coverage curves")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--backend", choices=("python", "cython"))
    p.add_argument("--lpmp-check", action="store_true",
                   help="compare direct feature pushes against matrix propagation")
    p.add_argument("--max-pushes", type=int, default=10_000_000)

    p = sub.add_parser("bench", help="per-epoch runtime per variant")
    _add_config_options(p)
    p.add_argument("--variants", help="comma-separated subset, default all four")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--warmup", type=int, default=3)
    p.add_argument("--out", help="CSV output path")
    return parser


# ---------------------------------------------------------------------------
# Command bodies
# ---------------------------------------------------------------------------

def _cmd_ingest(args) -> int:
    if args.format == "canonical":
        if not (args.edges and args.features and args.labels):
            raise ConfigurationError("canonical ingest needs --edges, --features, --labels")
        n, d, c = ingest_canonical(args.edges, args.features, args.labels,
                                   args.out_dir, dense_csv=args.dense_csv)
    elif args.format == "content-cites":
        if not (args.content and args.cites):
            raise ConfigurationError("content-cites ingest needs --content and --cites")
        n, d, c = ingest_content_cites(args.content, args.cites, args.out_dir)
    else:
        if not args.npz:
            raise ConfigurationError("npz ingest needs --npz")
        n, d, c = ingest_npz(args.npz, args.out_dir)
    print(json.dumps({"nodes": n, "features": d, "classes": c,
                      "out_dir": str(args.out_dir)}, sort_keys=True))
    return 0


def _cmd_appr(args) -> int:
    prepared = prepare_dataset(args.data_dir)
    w = normalize_adjacency(prepared.graph, NormalizationKind(args.norm))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = []
    for alpha in args.alpha:
        appr = build_appr_matrix(
            w, ApprParams(alpha=alpha, epsilon=args.epsilon, max_pushes=args.max_pushes),
            workers=args.workers, backend=args.backend)
        name = f"appr_{args.norm}_a{alpha!r}_e{args.epsilon!r}.txt"
        save_appr_matrix(out_dir / name, appr)
        summary.append({"alpha": alpha, "epsilon": args.epsilon, "file": name,
                        "nnz": int(appr.matrix.nnz),
                        "density": appr.matrix.nnz / float(prepared.graph.n) ** 2,
                        "nonconverged_columns": appr.nonconverged_columns,
                        "total_pushes": appr.total_pushes})
    print(json.dumps({"n": prepared.graph.n, "matrices": summary}, sort_keys=True))
    return 0


def _prepare_for_training(args):
    overrides = _config_overrides(args)
    if getattr(args, "seed", None) is not None:
        overrides["init_seed"] = args.seed
    config = load_config(getattr(args, "config", None), overrides)
    if config.data_dir is None:
        raise ConfigurationError("no dataset: pass --data or set data_dir in the config")
    prepared = prepare_dataset(config.data_dir, dense_csv=config.features_dense_csv,
                               name=config.resolved_dataset())
    w = normalize_adjacency(prepared.graph, NormalizationKind(config.norm))
    scale_set, build_seconds = build_scale_set(
        w, config.scales, config.epsilon, config.aggregator,
        max_pushes=config.max_pushes, workers=config.workers,
        backend=config.backend, appr_dir=config.appr_dir, norm_tag=config.norm)
    return config, prepared, scale_set, build_seconds


def _cmd_train(args) -> int:
    config, prepared, scale_set, build_seconds = _prepare_for_training(args)
    labels = prepared.labels
    num_classes = int(labels.max()) + 1
    train_idx, val_idx, test_idx = sample_split(labels, SplitSpec(
        train_per_class=config.train_per_class, val_count=config.val_count,
        seed=config.split_seed, index=args.split_index))
    spec = model_spec_from_config(config, prepared.x.shape[1], num_classes)
    rng = np.random.default_rng([config.init_seed, args.split_index, 0])
    model = Model.init(spec, scale_set, rng)
    cache = PropagationCache() if spec.cacheable else None
    history = train_model(model, prepared.x, labels, train_idx, val_idx,
                          rng=rng, max_epochs=config.max_epochs, cache=cache)
    ev = model.forward(prepared.x, mode="eval", cache=cache)
    acc, f1 = evaluate(predict_labels(ev.probs), labels, test_idx, num_classes=num_classes)
    if args.checkpoint:
        save_checkpoint(args.checkpoint, model)
    metrics = {"dataset": prepared.name, "variant": config.variant,
               "split_index": args.split_index, "epochs": history.epochs_run,
               "test_accuracy": acc, "test_macro_f1": f1,
               "best_val_accuracy": history.best_val_acc,
               "mean_epoch_seconds": history.mean_epoch_seconds,
               "appr_build_seconds": build_seconds}
    payload = json.dumps(metrics, sort_keys=True, indent=1)
    if args.metrics:
        Path(args.metrics).write_text(payload + "\n", encoding="utf-8")
    print(payload)
    return 0


def _cmd_eval(args) -> int:
    overrides = _config_overrides(args)
    config = load_config(getattr(args, "config", None), overrides)
    if config.data_dir is None:
        raise ConfigurationError("no dataset: pass --data or set data_dir in the config")
    prepared = prepare_dataset(config.data_dir, dense_csv=config.features_dense_csv,
                               name=config.resolved_dataset())
    labels = prepared.labels
    num_classes = int(labels.max()) + 1

    # architecture comes from the checkpoint; matrices are rebuilt to match
    with open(args.checkpoint, "r", encoding="utf-8") as fh:
        spec_record = json.load(fh)["spec"]
    w = normalize_adjacency(prepared.graph, NormalizationKind(config.norm))
    scale_set, _ = build_scale_set(
        w, tuple(spec_record["scales"]), float(spec_record["epsilon"]),
        spec_record["aggregator"], max_pushes=config.max_pushes,
        workers=config.workers, backend=config.backend,
        appr_dir=config.appr_dir, norm_tag=config.norm)
    model = load_checkpoint(args.checkpoint, scale_set)

    train_idx, val_idx, test_idx = sample_split(labels, SplitSpec(
        train_per_class=config.train_per_class, val_count=config.val_count,
        seed=config.split_seed, index=args.split_index))
    mask = {"train": train_idx, "val": val_idx, "test": test_idx}[args.on]
    cache = PropagationCache() if model.spec.cacheable else None
    ev = model.forward(prepared.x, mode="eval", cache=cache)
    acc, f1 = evaluate(predict_labels(ev.probs), labels, mask, num_classes=num_classes)
    payload = json.dumps({"dataset": prepared.name, "on": args.on,
                          "accuracy": acc, "macro_f1": f1,
                          "split_index": args.split_index}, sort_keys=True, indent=1)
    if args.metrics:
        Path(args.metrics).write_text(payload + "\n", encoding="utf-8")
    print(payload)
    return 0


def _cmd_run(args) -> int:
    overrides = _config_overrides(args)
    config = load_config(getattr(args, "config", None), overrides)
    result = run_experiment(config, out_dir=config.out_dir)
    print(json.dumps(result.aggregate, sort_keys=True, indent=1))
    return 0


def _cmd_stats(args) -> int:
    prepared = prepare_dataset(args.data_dir)
    w = normalize_adjacency(prepared.graph, NormalizationKind(args.norm))
    alphas = args.alpha or [0.2, 0.1, 0.05]
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    report = {"n": prepared.graph.n, "alphas": alphas, "epsilon": args.epsilon}

    for alpha in alphas:
        appr = build_appr_matrix(
            w, ApprParams(alpha=alpha, epsilon=args.epsilon, max_pushes=args.max_pushes),
            workers=args.workers, backend=args.backend)
        stats = khop_coverage_stats(prepared.graph, appr)
        tag = f"a{alpha!r}_e{args.epsilon!r}"
        if out_dir:
            with open(out_dir / f"coverage_mean_{tag}.csv", "w",
                      encoding="utf-8", newline="\n") as fh:
                fh.write("hop,mean_coverage,shell_sources,reference\n")
                for k in range(stats.max_hop + 1):
                    mean = stats.mean_curve[k]
                    fh.write(f"{k},{'' if np.isnan(mean) else repr(float(mean))},"
                             f"{stats.shell_counts[k]},{float(stats.reference_curve[k])!r}\n")
            if args.per_source:
                with open(out_dir / f"coverage_sources_{tag}.csv", "w",
                          encoding="utf-8", newline="\n") as fh:
                    fh.write("source,hop,coverage\n")
                    for s, curve in enumerate(stats.per_source):
                        for k, val in enumerate(curve):
                            if not np.isnan(val):
                                fh.write(f"{s},{k},{float(val)!r}\n")
        report[f"mean_support_size_{tag}"] = stats.mean_support_size
        report[f"reference_hop_{tag}"] = stats.reference_hop

    if args.lpmp_check:
        alpha = alphas[0]
        appr = build_appr_matrix(
            w, ApprParams(alpha=alpha, epsilon=args.epsilon, max_pushes=args.max_pushes),
            workers=args.workers, backend=args.backend)
        direct = lpmp_propagate(w, prepared.x, alpha, args.epsilon,
                                max_pushes=args.max_pushes, workers=args.workers,
                                backend=args.backend)
        via_matrix = propagate(appr.matrix, prepared.x)
        deviation = float(np.abs(direct.h - via_matrix).max())
        report["lpmp_check_alpha"] = alpha
        report["lpmp_check_max_deviation"] = deviation
        report["lpmp_check_ok"] = bool(deviation <= 1e-12)
    print(json.dumps(report, sort_keys=True, indent=1))
    return 0


def _cmd_bench(args) -> int:
    overrides = _config_overrides(args)
    config = load_config(getattr(args, "config", None), overrides)
    if config.data_dir is None:
        raise ConfigurationError("no dataset: pass --data or set data_dir in the config")
    prepared = prepare_dataset(config.data_dir, dense_csv=config.features_dense_csv,
                               name=config.resolved_dataset())
    variants = args.variants.split(",") if args.variants else ("full", "ptp", "pp", "tpp")
    rows = bench_variants(prepared, config, variants=variants,
                          epochs=args.epochs, warmup=args.warmup)
    header = f"{'variant':8} {'mean s/epoch':>14} {'std':>12} {'cv':>8}"
    print(header)
    for row in rows:
        print(f"{row['variant']:8} {row['mean_epoch_seconds']:14.6f} "
              f"{row['std_epoch_seconds']:12.6f} {row['cv']:8.3f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("variant,epochs_timed,mean_epoch_seconds,std_epoch_seconds,cv,"
                     "appr_build_seconds\n")
            for row in rows:
                fh.write(f"{row['variant']},{row['epochs_timed']},"
                         f"{row['mean_epoch_seconds']!r},{row['std_epoch_seconds']!r},"
                         f"{row['cv']!r},{row['appr_build_seconds']!r}\n")
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "appr": _cmd_appr,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "run": _cmd_run,
    "stats": _cmd_stats,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except PushnetError as exc:
        sys.stderr.write(json.dumps({"error": exc.category, "message": str(exc)}) + "\n")
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
