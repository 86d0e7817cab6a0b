"""Undirected graph ingestion, cleaning and adjacency normalization.

Graphs are plain immutable containers (node count, deduplicated undirected
edge array, degree vector). All matrix-valued results are scipy CSR with
sorted indices and 64-bit float values; dense feature matrices are
row-major float64 arrays.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, ParseError

__all__ = [
    "Graph",
    "NormalizationKind",
    "load_edge_list",
    "read_edge_list",
    "write_edge_list",
    "adjacency_matrix",
    "largest_connected_component",
    "normalize_adjacency",
    "row_l1_normalize",
    "l1_normalize_features",
    "load_features",
    "write_features",
    "load_labels",
    "write_labels",
    "validate_csr",
]


class NormalizationKind(enum.Enum):
    """Adjacency normalization: symmetric with added self-loops, or plain
    random-walk (row-stochastic, no added self-loops)."""

    SYMMETRIC_SELF_LOOPS = "sym"
    RANDOM_WALK = "rw"


@dataclass(frozen=True)
class Graph:
    """Undirected graph with 0-based compact node ids.

    Attributes
    ----------
    n : int
        Node count.
    edges : ndarray, shape (m, 2), int64
        Deduplicated undirected edges stored canonically (u <= v) and
        sorted lexicographically. Self-loops (u == u) are allowed.
    degrees : ndarray, shape (n,), int64
        Number of incident edges per node; a self-loop counts once.
    """

    n: int
    edges: np.ndarray
    degrees: np.ndarray

    def __post_init__(self):
        if self.edges.size and (self.edges.min() < 0 or self.edges.max() >= self.n):
            raise DomainError("edge endpoint outside [0, n)")

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]


def _graph_from_edge_set(n: int, pairs: set[tuple[int, int]]) -> Graph:
    if pairs:
        edges = np.array(sorted(pairs), dtype=np.int64)
    else:
        edges = np.zeros((0, 2), dtype=np.int64)
    degrees = np.zeros(n, dtype=np.int64)
    for u, v in edges:
        degrees[u] += 1
        if v != u:
            degrees[v] += 1
    return Graph(n=n, edges=edges, degrees=degrees)


def load_edge_list(lines: Iterable[str]) -> Graph:
    """Parse an edge-list text stream into a Graph.

    Each nonempty, non-comment (``#``) line holds two whitespace-separated
    integer ids. Both orientations and repeated lines collapse to one
    undirected edge. An optional first line ``N <n>`` fixes the node count;
    otherwise ``n = max id + 1``.
    """
    pairs: set[tuple[int, int]] = set()
    declared_n = None
    max_id = -1
    first_meaningful = True
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if first_meaningful and tokens[0] == "N":
            first_meaningful = False
            if len(tokens) != 2:
                raise ParseError(f"line {lineno}: node-count header must be 'N <n>'")
            try:
                declared_n = int(tokens[1])
            except ValueError:
                raise ParseError(f"line {lineno}: non-integer node count {tokens[1]!r}") from None
            if declared_n < 0:
                raise DomainError(f"line {lineno}: negative node count")
            continue
        first_meaningful = False
        if len(tokens) != 2:
            raise ParseError(f"line {lineno}: expected two ids, got {len(tokens)} tokens")
        try:
            u, v = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise ParseError(f"line {lineno}: non-integer id in {line!r}") from None
        if u < 0 or v < 0:
            raise DomainError(f"line {lineno}: negative node id")
        if u > v:
            u, v = v, u
        pairs.add((u, v))
        max_id = max(max_id, v)

    n = declared_n if declared_n is not None else max_id + 1
    if max_id >= n:
        raise DomainError(f"edge id {max_id} exceeds declared node count {n}")
    return _graph_from_edge_set(n, pairs)


def read_edge_list(path) -> Graph:
    with open(path, "r", encoding="utf-8") as fh:
        return load_edge_list(fh)


def write_edge_list(path, g: Graph) -> None:
    """Write the canonical edge-list format with an explicit node-count
    header (preserves isolated nodes on round-trip)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"N {g.n}\n")
        for u, v in g.edges:
            fh.write(f"{u} {v}\n")


def adjacency_matrix(g: Graph) -> sp.csr_matrix:
    """Symmetric 0/1 adjacency in CSR; a self-loop is a single diagonal 1."""
    if g.num_edges == 0:
        return sp.csr_matrix((g.n, g.n), dtype=np.float64)
    u = g.edges[:, 0]
    v = g.edges[:, 1]
    off = u != v
    rows = np.concatenate([u, v[off]])
    cols = np.concatenate([v, u[off]])
    data = np.ones(rows.shape[0], dtype=np.float64)
    m = sp.coo_matrix((data, (rows, cols)), shape=(g.n, g.n)).tocsr()
    m.sort_indices()
    return m


def largest_connected_component(g: Graph) -> tuple[Graph, np.ndarray]:
    """Induced subgraph on the largest component, ids compacted to 0..m-1.

    Ties between equal-sized components go to the one containing the
    smallest original id. Returns the subgraph and an old-to-new id map
    (-1 for dropped nodes). The empty graph maps to itself.
    """
    if g.n == 0:
        return g, np.zeros(0, dtype=np.int64)

    adj = adjacency_matrix(g)
    indptr, indices = adj.indptr, adj.indices
    comp = np.full(g.n, -1, dtype=np.int64)
    best_seed, best_size = -1, 0
    n_comp = 0
    for seed in range(g.n):
        if comp[seed] >= 0:
            continue
        stack = [seed]
        comp[seed] = n_comp
        size = 0
        while stack:
            u = stack.pop()
            size += 1
            for w in indices[indptr[u]:indptr[u + 1]]:
                if comp[w] < 0:
                    comp[w] = n_comp
                    stack.append(w)
        # strict > keeps the earliest (smallest-min-id) component on ties
        if size > best_size:
            best_size, best_seed = size, n_comp
        n_comp += 1

    keep = np.where(comp == best_seed)[0]
    mapping = np.full(g.n, -1, dtype=np.int64)
    mapping[keep] = np.arange(keep.shape[0], dtype=np.int64)

    kept_pairs = set()
    for u, v in g.edges:
        if mapping[u] >= 0 and mapping[v] >= 0:
            a, b = mapping[u], mapping[v]
            if a > b:
                a, b = b, a
            kept_pairs.add((int(a), int(b)))
    return _graph_from_edge_set(keep.shape[0], kept_pairs), mapping


def normalize_adjacency(g: Graph, kind: NormalizationKind) -> sp.csr_matrix:
    """Normalized adjacency matrix.

    SYMMETRIC_SELF_LOOPS adds the identity first and scales symmetrically
    by inverse square-root row sums. RANDOM_WALK divides each row of the
    plain adjacency by the node degree; rows of isolated nodes stay zero.
    """
    if g.n < 1:
        raise DomainError("normalize_adjacency requires at least one node")
    a = adjacency_matrix(g)
    if kind is NormalizationKind.SYMMETRIC_SELF_LOOPS:
        a_tilde = (a + sp.identity(g.n, dtype=np.float64, format="csr")).tocsr()
        row_sums = np.asarray(a_tilde.sum(axis=1)).ravel()
        inv_sqrt = 1.0 / np.sqrt(row_sums)
        d = sp.diags(inv_sqrt)
        out = (d @ a_tilde @ d).tocsr()
    elif kind is NormalizationKind.RANDOM_WALK:
        deg = g.degrees.astype(np.float64)
        inv = np.zeros_like(deg)
        nz = deg > 0
        inv[nz] = 1.0 / deg[nz]
        out = (sp.diags(inv) @ a).tocsr()
    else:  # pragma: no cover - exhaustive enum
        raise DomainError(f"unknown normalization kind {kind!r}")
    out.sort_indices()
    return out


def row_l1_normalize(m: sp.csr_matrix) -> sp.csr_matrix:
    """Scale each nonempty row to unit L1 mass; all-zero rows unchanged.

    Values must be nonnegative (the matrices carried here are importance
    weights and bag-of-words counts).
    """
    if m.nnz and m.data.min() < 0:
        raise DomainError("row_l1_normalize requires nonnegative values")
    out = m.tocsr(copy=True)
    row_sums = np.asarray(out.sum(axis=1)).ravel()
    scale = np.ones_like(row_sums)
    nz = row_sums > 0
    scale[nz] = 1.0 / row_sums[nz]
    out.data *= np.repeat(scale, np.diff(out.indptr))
    return out


def l1_normalize_features(x: np.ndarray) -> np.ndarray:
    """Divide each row of a nonnegative dense matrix by its L1 norm; zero
    rows are left untouched."""
    x = np.asarray(x, dtype=np.float64)
    if x.size and x.min() < 0:
        raise DomainError("l1_normalize_features requires nonnegative entries")
    sums = x.sum(axis=1, keepdims=True)
    scale = np.where(sums > 0, sums, 1.0)
    return x / scale


def validate_csr(m: sp.csr_matrix) -> None:
    """Check structural invariants of a CSR matrix loaded from disk."""
    indptr = m.indptr
    if indptr[0] != 0 or indptr[-1] != m.nnz or np.any(np.diff(indptr) < 0):
        raise DomainError("invalid CSR row offsets")
    for i in range(m.shape[0]):
        cols = m.indices[indptr[i]:indptr[i + 1]]
        if cols.size and (np.any(np.diff(cols) <= 0) or cols[0] < 0 or cols[-1] >= m.shape[1]):
            raise DomainError(f"row {i}: column indices not strictly increasing in range")
    if m.nnz and not np.all(np.isfinite(m.data)):
        raise DomainError("non-finite value in sparse matrix")


# ---------------------------------------------------------------------------
# Feature / label files
# ---------------------------------------------------------------------------

def load_features(path, dense_csv: bool = False) -> np.ndarray:
    """Load a dense n x d float64 feature matrix.

    Default format: header line ``n d nnz`` followed by ``nnz`` lines
    ``row col value`` (0-based). With ``dense_csv=True`` the file is a
    plain comma-separated dense matrix instead.
    """
    if dense_csv:
        x = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
        return x
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ParseError("feature file: header must be 'n d nnz'")
        try:
            n, d, nnz = (int(t) for t in header)
        except ValueError:
            raise ParseError("feature file: non-integer header field") from None
        x = np.zeros((n, d), dtype=np.float64)
        for lineno, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            if len(tokens) != 3:
                raise ParseError(f"feature file line {lineno}: expected 'row col value'")
            try:
                i, j, val = int(tokens[0]), int(tokens[1]), float(tokens[2])
            except ValueError:
                raise ParseError(f"feature file line {lineno}: bad token") from None
            if not (0 <= i < n and 0 <= j < d):
                raise DomainError(f"feature file line {lineno}: index out of range")
            x[i, j] = val
            nnz -= 1
        if nnz != 0:
            raise ParseError("feature file: entry count does not match header")
    return x


def write_features(path, x: np.ndarray) -> None:
    x = np.asarray(x, dtype=np.float64)
    rows, cols = np.nonzero(x)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{x.shape[0]} {x.shape[1]} {rows.shape[0]}\n")
        for i, j in zip(rows, cols):
            fh.write(f"{i} {j} {float(x[i, j])!r}\n")


def load_labels(path, n: int) -> np.ndarray:
    """Load ``node_id label_id`` lines into a length-n int64 vector.

    Nodes without a line get label -1 (callers requiring full labeling
    must check).
    """
    labels = np.full(n, -1, dtype=np.int64)
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            if len(tokens) != 2:
                raise ParseError(f"label file line {lineno}: expected 'node label'")
            try:
                node, lab = int(tokens[0]), int(tokens[1])
            except ValueError:
                raise ParseError(f"label file line {lineno}: non-integer token") from None
            if not 0 <= node < n:
                raise DomainError(f"label file line {lineno}: node id out of range")
            if lab < 0:
                raise DomainError(f"label file line {lineno}: negative label")
            labels[node] = lab
    return labels


def write_labels(path, labels: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for node, lab in enumerate(labels):
            if lab >= 0:
                fh.write(f"{node} {lab}\n")
