"""Approximate personalized PageRank via reverse local push.

Each target column is computed independently by pushing residual mass to
incoming neighbors, weighted by the stored matrix entry of the receiver.
Columns are assembled into a row-major matrix whose row i holds the
importance vector of source i. A dense linear-system solver doubles as a
verification oracle for small graphs.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ._backend import get_kernels
from .errors import DomainError, NumericalError, ParseError
from .graph import validate_csr

__all__ = [
    "ApprParams",
    "ApprColumn",
    "ApprMatrix",
    "reverse_push_column",
    "exact_ppr_oracle",
    "build_appr_matrix",
    "sum_scales",
    "save_appr_matrix",
    "load_appr_matrix",
]

DEFAULT_MAX_PUSHES = 10_000_000


@dataclass(frozen=True)
class ApprParams:
    """Restart probability, residual threshold and push safeguard cap."""

    alpha: float
    epsilon: float
    max_pushes: int = DEFAULT_MAX_PUSHES

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.epsilon > 0.0:
            raise DomainError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_pushes < 1:
            raise DomainError("max_pushes must be at least 1")


@dataclass(frozen=True)
class ApprColumn:
    """Sparse estimates of the importance of one target for every source."""

    target: int
    nodes: np.ndarray
    values: np.ndarray
    residual_norm_at_exit: float
    pushes: int
    converged: bool

    def as_dict(self) -> dict[int, float]:
        return {int(s): float(v) for s, v in zip(self.nodes, self.values)}


@dataclass(frozen=True)
class ApprMatrix:
    """Importance matrix at one scale; row i is the vector of source i."""

    alpha: float
    epsilon: float
    matrix: sp.csr_matrix
    nonconverged_columns: int = 0
    total_pushes: int = 0

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def converged(self) -> bool:
        return self.nonconverged_columns == 0


def _to_csc_arrays(w: sp.spmatrix):
    """Column-compressed view of w: column i lists j with w(j, i) stored."""
    if w.shape[0] != w.shape[1]:
        raise DomainError(f"weight matrix must be square, got {w.shape}")
    csc = sp.csc_matrix(w)
    csc.sort_indices()
    data = np.ascontiguousarray(csc.data, dtype=np.float64)
    indices = np.ascontiguousarray(csc.indices, dtype=np.int32)
    indptr = np.ascontiguousarray(csc.indptr, dtype=np.int32)
    return data, indices, indptr, w.shape[0]


def reverse_push_column(w: sp.spmatrix, k: int, params: ApprParams,
                        backend: str | None = None) -> ApprColumn:
    """Estimate the importance of target k for every source node.

    Maintains a sparse estimate vector and residual vector (initially the
    unit vector at k); repeatedly pushes the largest residual until all
    residuals drop to epsilon or the push cap is hit, in which case the
    partial result is flagged non-converged.
    """
    data, indices, indptr, n = _to_csc_arrays(w)
    if not 0 <= k < n:
        raise DomainError(f"target {k} outside [0, {n})")
    kern = get_kernels(backend)
    ws = kern.make_workspace(n)
    nodes, values, pushes, residual, converged = kern.push_column(
        data, indices, indptr, n, k, params.alpha, params.epsilon,
        params.max_pushes, ws)
    return ApprColumn(target=k, nodes=nodes, values=values,
                      residual_norm_at_exit=residual, pushes=pushes,
                      converged=converged)


def exact_ppr_oracle(w: sp.spmatrix, alpha: float) -> np.ndarray:
    """Dense restart-walk importance matrix, for verification only.

    Solves ``M = alpha*I + (1-alpha)*M*w`` row-wise by a dense linear
    solve; requires n <= 1000 and spectral radius of (1-alpha)*w below 1.
    """
    n = w.shape[0]
    if w.shape[0] != w.shape[1]:
        raise DomainError("oracle requires a square matrix")
    if n > 1000:
        raise DomainError("oracle limited to n <= 1000 (dense solve)")
    dense = np.asarray(w.todense() if sp.issparse(w) else w, dtype=np.float64)
    lhs = np.eye(n) - (1.0 - alpha) * dense
    try:
        # M @ lhs = alpha*I  <=>  lhs.T @ M.T = alpha*I
        return np.linalg.solve(lhs.T, alpha * np.eye(n)).T
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular restart-walk system: {exc}") from exc


def build_appr_matrix(w: sp.spmatrix, params: ApprParams, workers: int = 1,
                      backend: str | None = None) -> ApprMatrix:
    """Run reverse push for every target and assemble the row-major matrix.

    Columns are independent; with the compiled backend they run on a
    thread pool. Assembly always merges in ascending target order, so the
    result is bit-identical at any worker count.
    """
    data, indices, indptr, n = _to_csc_arrays(w)
    kern = get_kernels(backend)
    workers = max(1, min(workers, n)) if n else 1
    bounds = np.linspace(0, n, workers + 1).astype(int)
    results: list = [None] * workers

    def run_range(slot: int):
        ws = kern.make_workspace(n)
        results[slot] = kern.push_range(
            data, indices, indptr, n, int(bounds[slot]), int(bounds[slot + 1]),
            params.alpha, params.epsilon, params.max_pushes, ws)

    if workers == 1:
        run_range(0)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_range, slot) for slot in range(workers)]
            for fut in futures:
                fut.result()

    counts = np.concatenate([res[0] for res in results]) if n else np.zeros(0, np.int64)
    rows = np.concatenate([res[1] for res in results]) if n else np.zeros(0, np.int32)
    vals = np.concatenate([res[2] for res in results]) if n else np.zeros(0)
    total_pushes = int(sum(res[3].sum() for res in results)) if n else 0
    nonconverged = int(sum((res[5] == 0).sum() for res in results)) if n else 0

    col_indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=col_indptr[1:])
    csc = sp.csc_matrix((vals, rows, col_indptr), shape=(n, n))
    csr = csc.tocsr()
    csr.sort_indices()
    if nonconverged:
        warnings.warn(
            f"{nonconverged} of {n} push columns hit the cap of "
            f"{params.max_pushes} pushes before converging", stacklevel=2)
    return ApprMatrix(alpha=params.alpha, epsilon=params.epsilon, matrix=csr,
                      nonconverged_columns=nonconverged, total_pushes=total_pushes)


def sum_scales(mats) -> sp.csr_matrix:
    """Elementwise sum of same-shape scale matrices; the support is the
    union of the inputs' supports (values are nonnegative, nothing
    cancels)."""
    mats = list(mats)
    if not mats:
        raise DomainError("sum_scales needs at least one matrix")
    csrs = [m.matrix if isinstance(m, ApprMatrix) else m for m in mats]
    shape = csrs[0].shape
    for m in csrs[1:]:
        if m.shape != shape:
            raise DomainError(f"shape mismatch in sum_scales: {m.shape} vs {shape}")
    total = csrs[0].copy()
    for m in csrs[1:]:
        total = total + m
    total = total.tocsr()
    total.sort_indices()
    return total


# ---------------------------------------------------------------------------
# Persistence: text triplet format, bit-exact round-trip
# ---------------------------------------------------------------------------

def save_appr_matrix(path, appr: ApprMatrix) -> None:
    """Write ``appr v1 n alpha epsilon nnz`` followed by ``i j value``
    lines; values carry 17 significant digits so the round-trip is
    bit-exact."""
    m = appr.matrix.tocsr()
    m.sort_indices()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"appr v1 {m.shape[0]} {float(appr.alpha)!r} {float(appr.epsilon)!r} {m.nnz}\n")
        coo = m.tocoo()
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write("%d %d %.17g\n" % (i, j, v))


def load_appr_matrix(path) -> ApprMatrix:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 6 or header[0] != "appr" or header[1] != "v1":
            raise ParseError("appr file: bad header (expected 'appr v1 n alpha epsilon nnz')")
        try:
            n = int(header[2])
            alpha = float(header[3])
            epsilon = float(header[4])
            nnz = int(header[5])
        except ValueError:
            raise ParseError("appr file: malformed header field") from None
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz, dtype=np.float64)
        for t in range(nnz):
            tokens = fh.readline().split()
            if len(tokens) != 3:
                raise ParseError(f"appr file: truncated at entry {t}")
            rows[t] = int(tokens[0])
            cols[t] = int(tokens[1])
            vals[t] = float(tokens[2])
    if nnz and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= n):
        raise DomainError("appr file: index out of range")
    if not math.isfinite(alpha) or not math.isfinite(epsilon):
        raise DomainError("appr file: non-finite parameter")
    m = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    m.sort_indices()
    validate_csr(m)
    return ApprMatrix(alpha=alpha, epsilon=epsilon, matrix=m)
