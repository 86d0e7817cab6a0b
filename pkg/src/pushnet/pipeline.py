"""End-to-end experiment harness: preprocessing, splits, metrics,
multi-run training, neighborhood coverage statistics and benchmarking.

Report files are deterministic: the per-run CSV and the aggregate JSON
contain only seed-determined quantities, so two invocations with the same
config are byte-identical at any worker count. Wall-clock measurements go
to a separate timings CSV that is excluded from that contract.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .appr import ApprMatrix, ApprParams, build_appr_matrix, load_appr_matrix, save_appr_matrix
from .config import ExperimentConfig
from .datasets import load_dataset
from .errors import ConfigurationError, DomainError
from .graph import (
    Graph,
    NormalizationKind,
    adjacency_matrix,
    l1_normalize_features,
    largest_connected_component,
    normalize_adjacency,
    row_l1_normalize,
)
from .neural import Model, ModelSpec, predict_labels
from .propagation import Aggregator, PropagationCache, ScaleSet
from .training import train_model

__all__ = [
    "SplitSpec",
    "sample_split",
    "evaluate",
    "PreparedData",
    "prepare_dataset",
    "build_scale_set",
    "model_spec_from_config",
    "RunReport",
    "ExperimentResult",
    "run_experiment",
    "write_reports",
    "CoverageStats",
    "khop_coverage_stats",
    "bench_variants",
]


# ---------------------------------------------------------------------------
# Splits and metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    train_per_class: int = 20
    val_count: int = 500
    seed: int = 0
    index: int = 0


def sample_split(labels: np.ndarray, spec: SplitSpec,
                 rng: np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-class training nodes, a fixed-size validation pool, rest test.

    Sampling is uniform without replacement and fully determined by
    (seed, index). The three index arrays are sorted, disjoint and
    exhaustive.
    """
    labels = np.asarray(labels)
    n = labels.shape[0]
    if labels.min() < 0:
        raise ConfigurationError("split sampling requires fully labeled nodes")
    classes = np.unique(labels)
    num_classes = int(labels.max()) + 1
    if classes.shape[0] != num_classes:
        raise ConfigurationError("labels must cover 0..c-1 without gaps")
    if n <= spec.train_per_class * num_classes + spec.val_count:
        raise ConfigurationError(
            f"need more than {spec.train_per_class}*{num_classes} + {spec.val_count} nodes, have {n}")
    if rng is None:
        rng = np.random.default_rng([spec.seed, spec.index])

    train_parts = []
    for c in range(num_classes):
        members = np.where(labels == c)[0]
        if members.shape[0] < spec.train_per_class:
            raise ConfigurationError(
                f"class {c} has {members.shape[0]} nodes, fewer than {spec.train_per_class}")
        train_parts.append(rng.choice(members, size=spec.train_per_class, replace=False))
    train = np.sort(np.concatenate(train_parts))

    remaining = np.setdiff1d(np.arange(n), train, assume_unique=False)
    val = np.sort(rng.choice(remaining, size=spec.val_count, replace=False))
    test = np.setdiff1d(remaining, val, assume_unique=True)
    return train.astype(np.int64), val.astype(np.int64), np.sort(test).astype(np.int64)


def evaluate(predictions: np.ndarray, labels: np.ndarray, mask: np.ndarray,
             num_classes: int | None = None) -> tuple[float, float]:
    """Accuracy and macro-F1 on the masked nodes.

    Macro-F1 averages per-class F1 over all ``num_classes`` classes
    (default: the label domain); a class absent from both predictions and
    truth on the mask contributes 0.
    """
    mask = np.asarray(mask)
    if mask.size == 0:
        raise DomainError("evaluation mask is empty")
    pred = np.asarray(predictions)[mask]
    true = np.asarray(labels)[mask]
    if num_classes is None:
        num_classes = int(np.asarray(labels).max()) + 1
    accuracy = float(np.mean(pred == true))

    f1_sum = 0.0
    for c in range(num_classes):
        tp = float(np.sum((pred == c) & (true == c)))
        fp = float(np.sum((pred == c) & (true != c)))
        fn = float(np.sum((pred != c) & (true == c)))
        denom = 2 * tp + fp + fn
        f1_sum += 2 * tp / denom if denom > 0 else 0.0
    return accuracy, f1_sum / num_classes


# ---------------------------------------------------------------------------
# Preprocessing and matrix preparation
# ---------------------------------------------------------------------------

@dataclass
class PreparedData:
    name: str
    graph: Graph
    x: np.ndarray
    labels: np.ndarray
    component_map: np.ndarray


def prepare_dataset(data_dir, dense_csv: bool = False, name: str | None = None) -> PreparedData:
    """Load canonical files, restrict everything to the largest connected
    component, then L1-normalize the feature rows."""
    g, x, labels = load_dataset(data_dir, dense_csv=dense_csv)
    sub, mapping = largest_connected_component(g)
    keep = np.where(mapping >= 0)[0]
    x = l1_normalize_features(x[keep])
    labels = labels[keep]
    return PreparedData(name=name or Path(data_dir).name, graph=sub, x=x,
                        labels=labels, component_map=mapping)


def _appr_filename(alpha: float, epsilon: float, norm: str) -> str:
    return f"appr_{norm}_a{alpha!r}_e{epsilon!r}.txt"


def build_scale_set(w, scales, epsilon: float, aggregator: str,
                    max_pushes: int = 10_000_000, workers: int = 1,
                    backend: str | None = None, appr_dir=None,
                    norm_tag: str = "sym") -> tuple[ScaleSet, float]:
    """Build (or reload) one matrix per scale, L1-normalize each row, and
    bundle them. Returns the scale set and the build wall-clock seconds
    (0 for fully reloaded sets). Raw matrices are persisted before
    normalization so they can be reused at any aggregator."""
    mats = []
    build_seconds = 0.0
    for alpha in scales:
        raw = None
        path = None
        if appr_dir is not None:
            path = Path(appr_dir) / _appr_filename(alpha, epsilon, norm_tag)
            if path.exists():
                raw = load_appr_matrix(path)
        if raw is None:
            started = time.perf_counter()
            raw = build_appr_matrix(w, ApprParams(alpha=alpha, epsilon=epsilon,
                                                  max_pushes=max_pushes),
                                    workers=workers, backend=backend)
            build_seconds += time.perf_counter() - started
            if path is not None:
                path.parent.mkdir(parents=True, exist_ok=True)
                save_appr_matrix(path, raw)
        mats.append(ApprMatrix(alpha=raw.alpha, epsilon=raw.epsilon,
                               matrix=row_l1_normalize(raw.matrix),
                               nonconverged_columns=raw.nonconverged_columns,
                               total_pushes=raw.total_pushes))
    return ScaleSet(matrices=mats, aggregator=Aggregator(aggregator)), build_seconds


def model_spec_from_config(config: ExperimentConfig, input_dim: int,
                           num_classes: int) -> ModelSpec:
    return ModelSpec(
        variant=config.variant,
        input_dim=input_dim,
        num_classes=num_classes,
        hidden=config.resolved_hidden(),
        scales=config.scales,
        aggregator=config.aggregator,
        epsilon=config.epsilon,
        dropout=config.resolved_dropout(),
        l2=config.resolved_l2(),
        learning_rate=config.resolved_learning_rate(),
    )


# ---------------------------------------------------------------------------
# Multi-run experiments
# ---------------------------------------------------------------------------

@dataclass
class RunReport:
    dataset: str
    variant: str
    split_seed: int
    split_index: int
    init_seed: int
    init_index: int
    accuracy: float
    macro_f1: float
    epochs: int
    mean_epoch_seconds: float
    appr_build_seconds: float


@dataclass
class ExperimentResult:
    reports: list[RunReport]
    aggregate: dict
    appr_build_seconds: float


def run_experiment(config: ExperimentConfig, out_dir=None) -> ExperimentResult:
    """The full protocol: for every split x initialization pair, train with
    early stopping and evaluate on the test nodes.

    Matrices are built once (reused across runs; persisted when
    ``appr_dir`` is set) and their build time is reported separately from
    the per-epoch runtime.
    """
    if config.data_dir is None:
        raise ConfigurationError("run_experiment requires data_dir")
    prepared = prepare_dataset(config.data_dir, dense_csv=config.features_dense_csv,
                               name=config.resolved_dataset())
    labels = prepared.labels
    if labels.min() < 0:
        raise ConfigurationError("dataset is not fully labeled")
    num_classes = int(labels.max()) + 1

    w = normalize_adjacency(prepared.graph, NormalizationKind(config.norm))
    scale_set, build_seconds = build_scale_set(
        w, config.scales, config.epsilon, config.aggregator,
        max_pushes=config.max_pushes, workers=config.workers,
        backend=config.backend, appr_dir=config.appr_dir, norm_tag=config.norm)

    spec = model_spec_from_config(config, prepared.x.shape[1], num_classes)
    reports: list[RunReport] = []
    for split_index in range(config.n_splits):
        split = sample_split(labels, SplitSpec(
            train_per_class=config.train_per_class, val_count=config.val_count,
            seed=config.split_seed, index=split_index))
        train_idx, val_idx, test_idx = split
        for init_index in range(config.n_inits):
            rng = np.random.default_rng([config.init_seed, split_index, init_index])
            model = Model.init(spec, scale_set, rng)
            cache = PropagationCache() if spec.cacheable else None
            history = train_model(model, prepared.x, labels, train_idx, val_idx,
                                  rng=rng, max_epochs=config.max_epochs, cache=cache)
            ev = model.forward(prepared.x, mode="eval", cache=cache)
            acc, f1 = evaluate(predict_labels(ev.probs), labels, test_idx,
                               num_classes=num_classes)
            reports.append(RunReport(
                dataset=prepared.name, variant=config.variant,
                split_seed=config.split_seed, split_index=split_index,
                init_seed=config.init_seed, init_index=init_index,
                accuracy=acc, macro_f1=f1, epochs=history.epochs_run,
                mean_epoch_seconds=history.mean_epoch_seconds,
                appr_build_seconds=build_seconds))

    accs = np.array([r.accuracy for r in reports])
    f1s = np.array([r.macro_f1 for r in reports])
    aggregate = {
        "dataset": prepared.name,
        "variant": config.variant,
        "n_runs": len(reports),
        "n_splits": config.n_splits,
        "n_inits": config.n_inits,
        "accuracy_mean": float(accs.mean()),
        "accuracy_std": _sample_std(accs),
        "macro_f1_mean": float(f1s.mean()),
        "macro_f1_std": _sample_std(f1s),
        "epochs_mean": float(np.mean([r.epochs for r in reports])),
        "scales": list(config.scales),
        "epsilon": config.epsilon,
        "aggregator": config.aggregator,
        "norm": config.norm,
        "split_seed": config.split_seed,
        "init_seed": config.init_seed,
    }
    result = ExperimentResult(reports=reports, aggregate=aggregate,
                              appr_build_seconds=build_seconds)
    if out_dir is not None:
        write_reports(result, out_dir)
    return result


def _sample_std(values: np.ndarray) -> float:
    """Sample standard deviation (n-1 denominator); 0 for a single run."""
    return float(values.std(ddof=1)) if values.size > 1 else 0.0


_RUN_COLUMNS = ("dataset", "variant", "split_seed", "split_index",
                "init_seed", "init_index", "accuracy", "macro_f1", "epochs")


def write_reports(result: ExperimentResult, out_dir) -> None:
    """Write runs.csv + aggregate.json (deterministic) and timings.csv
    (wall-clock, excluded from the byte-identical contract)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "runs.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(_RUN_COLUMNS) + "\n")
        for r in result.reports:
            fh.write(",".join([
                r.dataset, r.variant, str(r.split_seed), str(r.split_index),
                str(r.init_seed), str(r.init_index), repr(r.accuracy),
                repr(r.macro_f1), str(r.epochs)]) + "\n")
    with open(out_dir / "aggregate.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(result.aggregate, fh, sort_keys=True, indent=1)
        fh.write("\n")
    with open(out_dir / "timings.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("split_index,init_index,mean_epoch_seconds,appr_build_seconds\n")
        for r in result.reports:
            fh.write(f"{r.split_index},{r.init_index},{r.mean_epoch_seconds!r},"
                     f"{r.appr_build_seconds!r}\n")


# ---------------------------------------------------------------------------
# Neighborhood coverage statistics
# ---------------------------------------------------------------------------

@dataclass
class CoverageStats:
    """Per-hop fraction of shell nodes covered by push supports."""

    max_hop: int
    mean_curve: np.ndarray
    shell_counts: np.ndarray
    per_source: list[np.ndarray]
    reference_curve: np.ndarray
    reference_hop: int
    mean_support_size: float


def _bfs_hops(indptr: np.ndarray, indices: np.ndarray, source: int, n: int) -> np.ndarray:
    dist = np.full(n, -1, dtype=np.int64)
    dist[source] = 0
    frontier = [source]
    hop = 0
    while frontier:
        hop += 1
        nxt = []
        for u in frontier:
            for v in indices[indptr[u]:indptr[u + 1]]:
                if dist[v] < 0:
                    dist[v] = hop
                    nxt.append(v)
        frontier = nxt
    return dist


def khop_coverage_stats(graph: Graph, appr: ApprMatrix) -> CoverageStats:
    """Fraction of exact-hop-k nodes inside each source's push support.

    Hops come from BFS on the plain graph without self-loops. The
    reference curve is the sharp k-neighborhood whose average ball size is
    closest to the average support size (1 up to that hop, 0 beyond).
    """
    if appr.shape[0] != graph.n:
        raise DomainError("matrix and graph disagree on node count")
    adj = adjacency_matrix(graph).tolil()
    adj.setdiag(0)
    adj = adj.tocsr()
    adj.eliminate_zeros()
    indptr, indices = adj.indptr, adj.indices

    p = appr.matrix.tocsr()
    n = graph.n
    per_source: list[np.ndarray] = []
    support_sizes = np.zeros(n)
    max_hop = 0
    all_dists = []
    for s in range(n):
        dist = _bfs_hops(indptr, indices, s, n)
        all_dists.append(dist)
        max_hop = max(max_hop, int(dist.max()))
    coverage_sum = np.zeros(max_hop + 1)
    shell_counts = np.zeros(max_hop + 1, dtype=np.int64)
    ball_sum = np.zeros(max_hop + 1)
    for s in range(n):
        dist = all_dists[s]
        row = p.getrow(s)
        support = set(row.indices[row.data > 0].tolist())
        support_sizes[s] = len(support)
        ecc = int(dist.max())
        curve = np.full(ecc + 1, np.nan)
        ball = 0
        for k in range(max_hop + 1):
            shell = np.where(dist == k)[0]
            if k <= ecc and shell.size:
                inside = sum(1 for u in shell if u in support)
                curve[k] = inside / shell.size
                coverage_sum[k] += curve[k]
                shell_counts[k] += 1
                ball += shell.size
            ball_sum[k] += ball
        per_source.append(curve)

    mean_curve = np.full(max_hop + 1, np.nan)
    nz = shell_counts > 0
    mean_curve[nz] = coverage_sum[nz] / shell_counts[nz]
    mean_support = float(support_sizes.mean())
    mean_ball = ball_sum / n
    reference_hop = int(np.argmin(np.abs(mean_ball - mean_support)))
    reference_curve = (np.arange(max_hop + 1) <= reference_hop).astype(np.float64)
    return CoverageStats(max_hop=max_hop, mean_curve=mean_curve,
                         shell_counts=shell_counts, per_source=per_source,
                         reference_curve=reference_curve, reference_hop=reference_hop,
                         mean_support_size=mean_support)


# ---------------------------------------------------------------------------
# Benchmarks
# ---------------------------------------------------------------------------

def bench_variants(prepared: PreparedData, config: ExperimentConfig,
                   variants=None, epochs: int = 20, warmup: int = 3) -> list[dict]:
    """Average per-epoch wall-clock per variant on a warm cache; matrix
    precomputation is excluded from the per-epoch numbers."""
    from dataclasses import replace

    variants = list(variants) if variants else [config.variant]
    labels = prepared.labels
    num_classes = int(labels.max()) + 1
    w = normalize_adjacency(prepared.graph, NormalizationKind(config.norm))
    scale_set, build_seconds = build_scale_set(
        w, config.scales, config.epsilon, config.aggregator,
        max_pushes=config.max_pushes, workers=config.workers,
        backend=config.backend, appr_dir=config.appr_dir, norm_tag=config.norm)
    split = sample_split(labels, SplitSpec(
        train_per_class=config.train_per_class, val_count=config.val_count,
        seed=config.split_seed, index=0))
    train_idx, val_idx, _ = split

    rows = []
    for variant in variants:
        cfg = replace(config, variant=variant,
                      hidden=None, learning_rate=None, dropout=None, l2=None,
                      _hidden_explicit=False)
        spec = model_spec_from_config(cfg, prepared.x.shape[1], num_classes)
        rng = np.random.default_rng([config.init_seed, 0, 0])
        model = Model.init(spec, scale_set, rng)
        cache = PropagationCache() if spec.cacheable else None
        history = train_model(model, prepared.x, labels, train_idx, val_idx,
                              rng=rng, max_epochs=epochs + warmup, cache=cache)
        timed = history.epoch_seconds[warmup:]
        mean = float(np.mean(timed))
        std = float(np.std(timed, ddof=1)) if len(timed) > 1 else 0.0
        rows.append({
            "variant": variant,
            "epochs_timed": len(timed),
            "mean_epoch_seconds": mean,
            "std_epoch_seconds": std,
            "cv": std / mean if mean > 0 else 0.0,
            "appr_build_seconds": build_seconds,
        })
    return rows
