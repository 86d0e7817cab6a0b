"""Small random-graph generators for tests and benchmarks."""

from __future__ import annotations

import numpy as np

from .graph import Graph, _graph_from_edge_set, largest_connected_component

__all__ = [
    "erdos_renyi_graph",
    "barabasi_albert_graph",
    "connected_part",
    "two_block_graph",
]


def erdos_renyi_graph(n: int, p: float, rng: np.random.Generator) -> Graph:
    """G(n, p): each of the n*(n-1)/2 undirected pairs kept independently."""
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.shape[0]) < p
    pairs = {(int(a), int(b)) for a, b in zip(iu[keep], ju[keep])}
    return _graph_from_edge_set(n, pairs)


def barabasi_albert_graph(n: int, m: int, rng: np.random.Generator) -> Graph:
    """Preferential attachment: each new node links to m distinct existing
    nodes sampled proportionally to degree."""
    if n <= m:
        raise ValueError("need n > m")
    pairs: set[tuple[int, int]] = set()
    # seed star over the first m+1 nodes
    repeated: list[int] = []
    for v in range(m):
        pairs.add((v, m))
        repeated += [v, m]
    for new in range(m + 1, n):
        targets: set[int] = set()
        while len(targets) < m:
            targets.add(int(repeated[rng.integers(len(repeated))]))
        for t in sorted(targets):
            pairs.add((min(t, new), max(t, new)))
            repeated += [t, new]
    return _graph_from_edge_set(n, pairs)


def connected_part(g: Graph) -> Graph:
    """Largest connected component of g (id map dropped)."""
    sub, _ = largest_connected_component(g)
    return sub


def two_block_graph(nodes_per_block: int, p_intra: float, p_inter: float,
                    rng: np.random.Generator) -> tuple[Graph, np.ndarray, np.ndarray]:
    """Two communities with dense intra- and sparse inter-block edges.

    Features are the one-hot block indicator; labels equal the block.
    Regenerates until the graph is connected so every node can be reached
    by propagation.
    """
    n = 2 * nodes_per_block
    labels = np.repeat(np.array([0, 1], dtype=np.int64), nodes_per_block)
    while True:
        pairs: set[tuple[int, int]] = set()
        iu, ju = np.triu_indices(n, k=1)
        same = labels[iu] == labels[ju]
        prob = np.where(same, p_intra, p_inter)
        keep = rng.random(iu.shape[0]) < prob
        pairs = {(int(a), int(b)) for a, b in zip(iu[keep], ju[keep])}
        g = _graph_from_edge_set(n, pairs)
        sub, mapping = largest_connected_component(g)
        if sub.n == n:
            break
    x = np.zeros((n, 2), dtype=np.float64)
    x[np.arange(n), labels] = 1.0
    return g, x, labels
