# cython: language_level=3
"""Compiled push kernels.

Mirror image of ``_pushpy``: identical selection rule (max residual, ties
to the smaller node id), identical floating-point evaluation order, so the
two backends produce bit-identical results. Selection uses an indexed
max-heap with in-place increase-key: residuals only grow between pops, so
the heap never holds duplicates and stays bounded by the node count. The
hot loops run without the GIL, so matrix builds parallelize across
threads.
"""

from libc.stdlib cimport free, malloc, qsort, realloc
from libc.string cimport memcpy, memset

import numpy as np

BACKEND_NAME = "cython"


cdef struct Buf:
    int* nodes
    double* values
    size_t size
    size_t cap


cdef inline int _buf_reserve(Buf* buf, size_t extra) noexcept nogil:
    cdef size_t need = buf.size + extra
    cdef int* nn
    cdef double* nv
    if need <= buf.cap:
        return 0
    while buf.cap < need:
        buf.cap *= 2
    nn = <int*>realloc(buf.nodes, buf.cap * sizeof(int))
    nv = <double*>realloc(buf.values, buf.cap * sizeof(double))
    if nn == NULL or nv == NULL:
        free(nn if nn != NULL else buf.nodes)
        free(nv if nv != NULL else buf.values)
        buf.nodes = NULL
        buf.values = NULL
        return -1
    buf.nodes = nn
    buf.values = nv
    return 0


cdef int _cmp_int(const void* a, const void* b) noexcept nogil:
    cdef int x = (<const int*>a)[0]
    cdef int y = (<const int*>b)[0]
    return (x > y) - (x < y)


cdef class Workspace:
    """Per-thread scratch buffers; zeroed via the touched list after every
    call so reuse across columns is cheap.

    The heap is indexed: ``pos[node]`` locates a node's slot (-1 when
    absent), keys are read straight from the residual array.
    """

    cdef int n
    cdef int h
    cdef double* r
    cdef double* p
    cdef unsigned char* seen
    cdef int* touched
    cdef int* heap
    cdef int* pos
    cdef size_t heap_size
    cdef double* phi
    cdef double* out
    cdef double* phi_row

    def __cinit__(self, int n, int h=0):
        self.n = n
        self.h = h
        self.heap_size = 0
        self.r = <double*>malloc(n * sizeof(double))
        self.p = <double*>malloc(n * sizeof(double))
        self.seen = <unsigned char*>malloc(n * sizeof(unsigned char))
        self.touched = <int*>malloc(n * sizeof(int))
        self.heap = <int*>malloc(n * sizeof(int))
        self.pos = <int*>malloc(n * sizeof(int))
        self.phi = NULL
        self.out = NULL
        self.phi_row = NULL
        if (self.r == NULL or self.p == NULL or self.seen == NULL
                or self.touched == NULL or self.heap == NULL or self.pos == NULL):
            raise MemoryError()
        memset(self.r, 0, n * sizeof(double))
        memset(self.p, 0, n * sizeof(double))
        memset(self.seen, 0, n * sizeof(unsigned char))
        cdef int i
        for i in range(n):
            self.pos[i] = -1
        if h > 0:
            self.phi = <double*>malloc(<size_t>n * h * sizeof(double))
            self.out = <double*>malloc(<size_t>n * h * sizeof(double))
            self.phi_row = <double*>malloc(h * sizeof(double))
            if self.phi == NULL or self.out == NULL or self.phi_row == NULL:
                raise MemoryError()
            memset(self.phi, 0, <size_t>n * h * sizeof(double))
            memset(self.out, 0, <size_t>n * h * sizeof(double))

    def __dealloc__(self):
        free(self.r)
        free(self.p)
        free(self.seen)
        free(self.touched)
        free(self.heap)
        free(self.pos)
        free(self.phi)
        free(self.out)
        free(self.phi_row)


def make_workspace(int n, int h=0):
    return Workspace(n, h)


cdef inline bint _before(double* r, int a, int b) noexcept nogil:
    # a pops before b: larger residual, then smaller id
    if r[a] != r[b]:
        return r[a] > r[b]
    return a < b


cdef inline void _sift_up(Workspace ws, size_t child) noexcept nogil:
    cdef int node = ws.heap[child]
    cdef size_t parent
    while child > 0:
        parent = (child - 1) >> 1
        if _before(ws.r, node, ws.heap[parent]):
            ws.heap[child] = ws.heap[parent]
            ws.pos[ws.heap[child]] = <int>child
            child = parent
        else:
            break
    ws.heap[child] = node
    ws.pos[node] = <int>child


cdef inline void _sift_down(Workspace ws, size_t slot) noexcept nogil:
    cdef int node = ws.heap[slot]
    cdef size_t child
    while True:
        child = 2 * slot + 1
        if child >= ws.heap_size:
            break
        if child + 1 < ws.heap_size and _before(ws.r, ws.heap[child + 1], ws.heap[child]):
            child += 1
        if _before(ws.r, ws.heap[child], node):
            ws.heap[slot] = ws.heap[child]
            ws.pos[ws.heap[slot]] = <int>slot
            slot = child
        else:
            break
    ws.heap[slot] = node
    ws.pos[node] = <int>slot


cdef inline void _heap_update(Workspace ws, int node) noexcept nogil:
    # residual of node grew: insert it or restore heap order in place
    if ws.pos[node] < 0:
        ws.heap[ws.heap_size] = node
        ws.pos[node] = <int>ws.heap_size
        ws.heap_size += 1
        _sift_up(ws, ws.heap_size - 1)
    else:
        _sift_up(ws, <size_t>ws.pos[node])


cdef inline int _heap_pop(Workspace ws) noexcept nogil:
    cdef int top = ws.heap[0]
    ws.pos[top] = -1
    ws.heap_size -= 1
    if ws.heap_size > 0:
        ws.heap[0] = ws.heap[ws.heap_size]
        ws.pos[ws.heap[0]] = 0
        _sift_down(ws, 0)
    return top


cdef long _push_column_core(const double* data, const int* indices,
                            const int* indptr, int k,
                            double alpha, double epsilon, long max_pushes,
                            Workspace ws, int* n_touched_out,
                            double* residual_out, bint* converged_out) noexcept nogil:
    """Scalar reverse push for one target; leaves estimates/residuals in
    ws.p / ws.r for the caller to harvest (touched list is sorted)."""
    cdef double om = 1.0 - alpha
    cdef double* r = ws.r
    cdef double* p = ws.p
    cdef int n_touched = 0
    cdef long pushes = 0
    cdef bint converged = 1
    cdef double ri, rj, residual
    cdef int i, j, t
    cdef long lo, hi, idx

    ws.heap_size = 0
    r[k] = 1.0
    ws.seen[k] = 1
    ws.touched[n_touched] = k
    n_touched += 1
    if 1.0 > epsilon:
        _heap_update(ws, k)
    while ws.heap_size > 0:
        if pushes >= max_pushes:
            converged = 0
            break
        i = _heap_pop(ws)
        pushes += 1
        ri = r[i]
        r[i] = 0.0
        p[i] += alpha * ri
        lo = indptr[i]
        hi = indptr[i + 1]
        for idx in range(lo, hi):
            j = indices[idx]
            rj = r[j] + (om * data[idx]) * ri
            r[j] = rj
            if not ws.seen[j]:
                ws.seen[j] = 1
                ws.touched[n_touched] = j
                n_touched += 1
            if rj > epsilon:
                _heap_update(ws, j)

    # drain leftover heap slots so the workspace is clean for the next call
    while ws.heap_size > 0:
        _heap_pop(ws)
    qsort(ws.touched, n_touched, sizeof(int), _cmp_int)
    residual = 0.0
    for t in range(n_touched):
        if r[ws.touched[t]] > residual:
            residual = r[ws.touched[t]]
    n_touched_out[0] = n_touched
    residual_out[0] = residual
    converged_out[0] = converged
    return pushes


cdef inline void _reset_scalar(Workspace ws, int n_touched) noexcept nogil:
    cdef int t, i
    for t in range(n_touched):
        i = ws.touched[t]
        ws.r[i] = 0.0
        ws.p[i] = 0.0
        ws.seen[i] = 0


def push_column(double[::1] data, int[::1] indices, int[::1] indptr,
                int n, int k, double alpha, double epsilon, long max_pushes,
                Workspace ws):
    """One reverse-push column; see the Python twin for the contract."""
    cdef int n_touched = 0
    cdef double residual = 0.0
    cdef bint converged = 1
    cdef long pushes
    cdef int t, i, n_nz

    with nogil:
        pushes = _push_column_core(&data[0], &indices[0], &indptr[0], k,
                                   alpha, epsilon, max_pushes, ws,
                                   &n_touched, &residual, &converged)
    nodes_out = np.empty(n_touched, dtype=np.int32)
    values_out = np.empty(n_touched, dtype=np.float64)
    cdef int[::1] nodes_view = nodes_out
    cdef double[::1] values_view = values_out
    n_nz = 0
    for t in range(n_touched):
        i = ws.touched[t]
        if ws.p[i] > 0.0:
            nodes_view[n_nz] = i
            values_view[n_nz] = ws.p[i]
            n_nz += 1
    _reset_scalar(ws, n_touched)
    return (nodes_out[:n_nz].copy(), values_out[:n_nz].copy(),
            pushes, residual, converged != 0)


def push_range(double[::1] data, int[::1] indices, int[::1] indptr,
               int n, int k_lo, int k_hi, double alpha, double epsilon,
               long max_pushes, Workspace ws):
    """All columns in [k_lo, k_hi) in one GIL-free sweep.

    Returns (counts, nodes, values, pushes, residuals, converged) where
    column k's entries occupy the slice given by the running sum of
    ``counts``.
    """
    cdef int ncols = k_hi - k_lo
    counts_out = np.zeros(ncols, dtype=np.int64)
    pushes_out = np.zeros(ncols, dtype=np.int64)
    residuals_out = np.zeros(ncols, dtype=np.float64)
    converged_out = np.ones(ncols, dtype=np.uint8)
    cdef long[::1] counts = counts_out
    cdef long[::1] col_pushes = pushes_out
    cdef double[::1] residuals = residuals_out
    cdef unsigned char[::1] conv = converged_out

    cdef Buf buf
    buf.size = 0
    buf.cap = 4096
    buf.nodes = <int*>malloc(buf.cap * sizeof(int))
    buf.values = <double*>malloc(buf.cap * sizeof(double))
    if buf.nodes == NULL or buf.values == NULL:
        free(buf.nodes)
        free(buf.values)
        raise MemoryError()

    cdef int k, t, i, n_touched
    cdef int n_nz
    cdef long pushes
    cdef double residual
    cdef bint converged
    cdef bint oom = 0
    with nogil:
        for k in range(k_lo, k_hi):
            n_touched = 0
            pushes = _push_column_core(&data[0], &indices[0], &indptr[0], k,
                                       alpha, epsilon, max_pushes, ws,
                                       &n_touched, &residual, &converged)
            if _buf_reserve(&buf, <size_t>n_touched) != 0:
                oom = 1
                break
            n_nz = 0
            for t in range(n_touched):
                i = ws.touched[t]
                if ws.p[i] > 0.0:
                    buf.nodes[buf.size] = i
                    buf.values[buf.size] = ws.p[i]
                    buf.size += 1
                    n_nz += 1
            _reset_scalar(ws, n_touched)
            counts[k - k_lo] = n_nz
            col_pushes[k - k_lo] = pushes
            residuals[k - k_lo] = residual
            conv[k - k_lo] = converged
    if oom:
        free(buf.nodes)
        free(buf.values)
        raise MemoryError("push output buffer allocation failed")

    nodes_out = np.empty(buf.size, dtype=np.int32)
    values_out = np.empty(buf.size, dtype=np.float64)
    cdef int[::1] nodes_view = nodes_out
    cdef double[::1] values_view = values_out
    if buf.size:
        memcpy(&nodes_view[0], buf.nodes, buf.size * sizeof(int))
        memcpy(&values_view[0], buf.values, buf.size * sizeof(double))
    free(buf.nodes)
    free(buf.values)
    return counts_out, nodes_out, values_out, pushes_out, residuals_out, converged_out


def lpmp_source(double[::1] data, int[::1] indices, int[::1] indptr,
                int n, int k, double[:, ::1] h0,
                double alpha, double epsilon, long max_pushes,
                Workspace ws):
    """Feature-vector push for one source; see the Python twin for the
    contract."""
    cdef int h = h0.shape[1]
    cdef double om = 1.0 - alpha
    cdef double* r = ws.r
    cdef double* phi = ws.phi
    cdef double* out = ws.out
    cdef double* phi_row = ws.phi_row
    cdef int n_touched = 0
    cdef long pushes = 0
    cdef double pushed_mass = 0.0
    cdef double residual_mass = 0.0
    cdef bint converged = 1
    cdef double ri, rj, scale
    cdef int i, j, t, f
    cdef long lo, hi, idx

    if ws.h != h:
        raise ValueError("workspace feature width mismatch")

    with nogil:
        ws.heap_size = 0
        r[k] = 1.0
        for f in range(h):
            phi[<size_t>k * h + f] = h0[k, f]
        ws.seen[k] = 1
        ws.touched[n_touched] = k
        n_touched += 1
        if 1.0 > epsilon:
            _heap_update(ws, k)
        while ws.heap_size > 0:
            if pushes >= max_pushes:
                converged = 0
                break
            i = _heap_pop(ws)
            pushes += 1
            ri = r[i]
            r[i] = 0.0
            pushed_mass += ri
            for f in range(h):
                out[<size_t>i * h + f] += alpha * phi[<size_t>i * h + f]
            memcpy(phi_row, phi + <size_t>i * h, h * sizeof(double))
            memset(phi + <size_t>i * h, 0, h * sizeof(double))
            lo = indptr[i]
            hi = indptr[i + 1]
            for idx in range(lo, hi):
                j = indices[idx]
                scale = om * data[idx]
                rj = r[j] + scale * ri
                r[j] = rj
                for f in range(h):
                    phi[<size_t>j * h + f] += scale * phi_row[f]
                if not ws.seen[j]:
                    ws.seen[j] = 1
                    ws.touched[n_touched] = j
                    n_touched += 1
                if rj > epsilon:
                    _heap_update(ws, j)
        while ws.heap_size > 0:
            _heap_pop(ws)
        qsort(ws.touched, n_touched, sizeof(int), _cmp_int)

    rows_out = np.empty(n_touched, dtype=np.int32)
    block_out = np.empty((n_touched, h), dtype=np.float64)
    cdef int[::1] rows_view = rows_out
    cdef double[:, ::1] block_view = block_out
    for t in range(n_touched):
        i = ws.touched[t]
        rows_view[t] = i
        residual_mass += r[i]
        for f in range(h):
            block_view[t, f] = out[<size_t>i * h + f]
            out[<size_t>i * h + f] = 0.0
            phi[<size_t>i * h + f] = 0.0
        r[i] = 0.0
        ws.seen[i] = 0
    return rows_out, block_out, pushes, pushed_mass, residual_mass, converged != 0
