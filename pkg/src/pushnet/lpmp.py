"""Asynchronous local-push message passing over feature vectors.

For each source node, its feature row is diffused through the graph by
repeatedly updating the node holding the largest unprocessed aggregator
state until every state falls below ``epsilon`` times the source norm.
This module is the executable reference for the single-propagation
equivalence: with identical parameters its output matches multiplying the
assembled push matrix by the feature matrix, because the per-source
scalar push trace is identical by construction.

Production propagation should precompute matrices with
:func:`pushnet.appr.build_appr_matrix` instead; this path exists as the
reference semantics and as a cross-check (CLI ``stats --lpmp-check``).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ._backend import get_kernels
from .appr import _to_csc_arrays
from .errors import DomainError

__all__ = ["LpmpResult", "lpmp_propagate"]


@dataclass(frozen=True)
class LpmpResult:
    """Accumulated output plus per-source shadow accounting."""

    h: np.ndarray
    total_pushes: int
    nonconverged_sources: int
    pushed_mass: np.ndarray
    residual_mass: np.ndarray

    @property
    def converged(self) -> bool:
        return self.nonconverged_sources == 0


def lpmp_propagate(w: sp.spmatrix, h0: np.ndarray, alpha: float, epsilon: float,
                   max_pushes: int = 10_000_000, workers: int = 1,
                   backend: str | None = None) -> LpmpResult:
    """Push every source's feature row until convergence; return the sum.

    Sources are independent (parallelizable); per-source contributions are
    always merged in ascending source order so the output is exactly
    invariant under source execution order and worker count. Sources with
    an all-zero feature row are skipped: their convergence criterion is
    false immediately.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if not epsilon > 0.0:
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    h0 = np.ascontiguousarray(h0, dtype=np.float64)
    if h0.ndim != 2:
        raise DomainError("h0 must be a 2-d matrix")
    data, indices, indptr, n = _to_csc_arrays(w)
    if h0.shape[0] != n:
        raise DomainError(f"h0 has {h0.shape[0]} rows, matrix is {n}x{n}")

    width = h0.shape[1]
    kern = get_kernels(backend)
    active = [k for k in range(n) if np.any(h0[k])]
    results: dict[int, tuple] = {}

    def run_sources(sources):
        ws = kern.make_workspace(n, width)
        for k in sources:
            results[k] = kern.lpmp_source(
                data, indices, indptr, n, k, h0, alpha, epsilon, max_pushes, ws)

    workers = max(1, min(workers, len(active))) if active else 1
    if workers == 1:
        run_sources(active)
    else:
        chunks = [active[t::workers] for t in range(workers)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_sources, chunk) for chunk in chunks]
            for fut in futures:
                fut.result()

    h = np.zeros((n, width), dtype=np.float64)
    pushed_mass = np.zeros(n, dtype=np.float64)
    residual_mass = np.zeros(n, dtype=np.float64)
    total_pushes = 0
    nonconverged = 0
    for k in active:  # ascending: canonical accumulation order
        rows, block, pushes, pmass, rmass, converged = results[k]
        h[rows, :] += block
        pushed_mass[k] = pmass
        residual_mass[k] = rmass
        total_pushes += pushes
        if not converged:
            nonconverged += 1
    return LpmpResult(h=h, total_pushes=total_pushes,
                      nonconverged_sources=nonconverged,
                      pushed_mass=pushed_mass, residual_mass=residual_mass)
