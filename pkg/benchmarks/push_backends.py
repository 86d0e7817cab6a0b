#!/usr/bin/env python3
"""Benchmark the compiled push kernel against the pure-Python fallback.

Builds full push matrices on synthetic graphs with both backends (and a
threaded compiled run), times them, and verifies the outputs are
bit-identical. Usage:

    python benchmarks/push_backends.py [--n 400] [--epsilon 1e-4] \
        [--alpha 0.1] [--repeat 1] [--workers 2]
"""

import argparse
import time

import numpy as np

from pushnet._backend import available_backends
from pushnet.appr import ApprParams, build_appr_matrix
from pushnet.graph import NormalizationKind, normalize_adjacency
from pushnet.synthetic import barabasi_albert_graph, connected_part, erdos_renyi_graph


def timed_build(w, params, backend, workers, repeat):
    best = float("inf")
    appr = None
    for _ in range(repeat):
        started = time.perf_counter()
        appr = build_appr_matrix(w, params, workers=workers, backend=backend)
        best = min(best, time.perf_counter() - started)
    return best, appr


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=400)
    ap.add_argument("--alpha", type=float, default=0.1)
    ap.add_argument("--epsilon", type=float, default=1e-4)
    ap.add_argument("--repeat", type=int, default=1)
    ap.add_argument("--workers", type=int, default=2)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    graphs = {
        "erdos-renyi": connected_part(erdos_renyi_graph(args.n, 4.0 / args.n, rng)),
        "pref-attach": connected_part(barabasi_albert_graph(args.n, 2, rng)),
    }
    params = ApprParams(alpha=args.alpha, epsilon=args.epsilon)
    backends = available_backends()
    print(f"backends: {', '.join(backends)}   alpha={args.alpha} epsilon={args.epsilon}")
    print(f"{'graph':12} {'backend':18} {'seconds':>10} {'speedup':>9} "
          f"{'pushes':>12} {'identical':>10}")

    for name, g in graphs.items():
        w = normalize_adjacency(g, NormalizationKind.RANDOM_WALK)
        rows = []
        reference = None
        baseline = None
        for backend in ("python", "cython"):
            if backend not in backends:
                continue
            configs = [(backend, 1)]
            if backend == "cython" and args.workers > 1:
                configs.append((backend, args.workers))
            for b, workers in configs:
                seconds, appr = timed_build(w, params, b, workers, args.repeat)
                if reference is None:
                    reference = appr
                    baseline = seconds
                identical = (np.array_equal(appr.matrix.indptr, reference.matrix.indptr)
                             and np.array_equal(appr.matrix.indices, reference.matrix.indices)
                             and np.array_equal(appr.matrix.data, reference.matrix.data))
                label = b if workers == 1 else f"{b} ({workers} threads)"
                rows.append((label, seconds, baseline / seconds,
                             appr.total_pushes, identical))
        for label, seconds, speedup, pushes, identical in rows:
            print(f"{name:12} {label:18} {seconds:10.3f} {speedup:8.1f}x "
                  f"{pushes:12d} {str(identical):>10}")


if __name__ == "__main__":
    main()
