"""Pure-Python push kernels (fallback when the compiled core is absent).

The compiled extension and this module implement the exact same algorithm
with the exact same floating-point evaluation order, so results are
bit-identical across backends:

  * node selection: always the node with the largest residual, ties broken
    by the smaller node id, via a lazily invalidated max-heap;
  * a heap entry is valid iff its key equals the node's current residual
    (residuals only grow between pops, and every increase pushes a fresh
    exact entry, so the true maximum always has a live entry);
  * residual is captured and zeroed *before* mass is distributed, so
    self-loop edges feed mass back into their own node;
  * the neighbor update is evaluated as ``(one_minus_alpha * w) * r_i``.

The weight matrix is passed in compressed sparse column form: processing
node i reads column i, i.e. all j with w(j, i) stored.
"""

from __future__ import annotations

import heapq

import numpy as np

BACKEND_NAME = "python"


class Workspace:
    """Reusable per-thread scratch buffers for one matrix size.

    Buffers are zeroed via the touched-node list after each call, so reuse
    across columns/sources is cheap.
    """

    def __init__(self, n: int, h: int = 0):
        self.n = n
        self.r = np.zeros(n, dtype=np.float64)
        self.p = np.zeros(n, dtype=np.float64)
        self.seen = np.zeros(n, dtype=bool)
        self.h = h
        self.phi = np.zeros((n, h), dtype=np.float64) if h > 0 else None
        self.out = np.zeros((n, h), dtype=np.float64) if h > 0 else None


def make_workspace(n: int, h: int = 0) -> Workspace:
    return Workspace(n, h)


def push_column(data, indices, indptr, n, k, alpha, epsilon, max_pushes, ws: Workspace):
    """One reverse-push column: scalar estimates for target node k.

    Returns (nodes, values, pushes, residual_at_exit, converged) where
    nodes is sorted ascending and values holds the strictly positive
    estimates.
    """
    r, p, seen = ws.r, ws.p, ws.seen
    om = 1.0 - alpha

    r[k] = 1.0
    seen[k] = True
    touched = [k]
    heap = []
    if 1.0 > epsilon:
        heap.append((-1.0, k))

    pushes = 0
    converged = True
    while heap:
        neg_key, i = heapq.heappop(heap)
        key = -neg_key
        if key != r[i]:
            continue
        if pushes >= max_pushes:
            converged = False
            break
        pushes += 1
        ri = r[i]
        r[i] = 0.0
        p[i] += alpha * ri
        lo, hi = indptr[i], indptr[i + 1]
        for idx in range(lo, hi):
            j = indices[idx]
            rj = r[j] + (om * data[idx]) * ri
            r[j] = rj
            if not seen[j]:
                seen[j] = True
                touched.append(j)
            if rj > epsilon:
                heapq.heappush(heap, (-rj, j))

    touched_arr = np.array(sorted(touched), dtype=np.int32)
    residual_at_exit = float(r[touched_arr].max())
    vals = p[touched_arr]
    nz = vals > 0.0
    nodes = touched_arr[nz]
    values = vals[nz].copy()

    r[touched_arr] = 0.0
    p[touched_arr] = 0.0
    seen[touched_arr] = False
    return nodes, values, pushes, residual_at_exit, converged


def push_range(data, indices, indptr, n, k_lo, k_hi, alpha, epsilon, max_pushes,
               ws: Workspace):
    """All columns in [k_lo, k_hi); same packed return layout as the
    compiled kernel."""
    counts = np.zeros(k_hi - k_lo, dtype=np.int64)
    pushes = np.zeros(k_hi - k_lo, dtype=np.int64)
    residuals = np.zeros(k_hi - k_lo, dtype=np.float64)
    converged = np.ones(k_hi - k_lo, dtype=np.uint8)
    node_parts = []
    value_parts = []
    for k in range(k_lo, k_hi):
        nodes, values, n_pushes, residual, conv = push_column(
            data, indices, indptr, n, k, alpha, epsilon, max_pushes, ws)
        node_parts.append(nodes)
        value_parts.append(values)
        counts[k - k_lo] = nodes.shape[0]
        pushes[k - k_lo] = n_pushes
        residuals[k - k_lo] = residual
        converged[k - k_lo] = conv
    nodes = np.concatenate(node_parts) if node_parts else np.zeros(0, dtype=np.int32)
    values = np.concatenate(value_parts) if value_parts else np.zeros(0)
    return counts, nodes, values, pushes, residuals, converged


def lpmp_source(data, indices, indptr, n, k, h0, alpha, epsilon, max_pushes, ws: Workspace):
    """Feature-vector push for one source node k.

    Maintains per-node aggregator vectors alongside a scalar shadow
    residual; selection and convergence are driven by the shadow, which
    equals the aggregator norm ratio exactly in exact arithmetic.

    Returns (rows, block, pushes, pushed_mass, residual_mass, converged)
    where ``block[t]`` is the accumulated output for node ``rows[t]``.
    """
    h = h0.shape[1]
    r, seen, phi, out = ws.r, ws.seen, ws.phi, ws.out
    om = 1.0 - alpha

    r[k] = 1.0
    phi[k, :] = h0[k, :]
    seen[k] = True
    touched = [k]
    heap = []
    if 1.0 > epsilon:
        heap.append((-1.0, k))

    pushes = 0
    pushed_mass = 0.0
    converged = True
    while heap:
        neg_key, i = heapq.heappop(heap)
        key = -neg_key
        if key != r[i]:
            continue
        if pushes >= max_pushes:
            converged = False
            break
        pushes += 1
        ri = r[i]
        r[i] = 0.0
        pushed_mass += ri
        out[i, :] += alpha * phi[i, :]
        phi_i = phi[i, :].copy()
        phi[i, :] = 0.0
        lo, hi = indptr[i], indptr[i + 1]
        for idx in range(lo, hi):
            j = indices[idx]
            scale = om * data[idx]
            rj = r[j] + scale * ri
            r[j] = rj
            phi[j, :] += scale * phi_i
            if not seen[j]:
                seen[j] = True
                touched.append(j)
            if rj > epsilon:
                heapq.heappush(heap, (-rj, j))

    touched_arr = np.array(sorted(touched), dtype=np.int32)
    residual_mass = 0.0
    for t in touched_arr:
        residual_mass += float(r[t])
    rows = touched_arr
    block = out[touched_arr, :].copy()

    r[touched_arr] = 0.0
    phi[touched_arr, :] = 0.0
    out[touched_arr, :] = 0.0
    seen[touched_arr] = False
    return rows, block, pushes, pushed_mass, residual_mass, converged
