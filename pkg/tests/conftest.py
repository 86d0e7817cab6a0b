import numpy as np
import pytest

from pushnet._backend import available_backends
from pushnet.graph import NormalizationKind, normalize_adjacency
from pushnet.synthetic import barabasi_albert_graph, connected_part, erdos_renyi_graph


@pytest.fixture(params=available_backends())
def backend(request):
    """Run the test for every kernel backend built in this environment."""
    return request.param


def random_connected_graph(rng, max_n=200, kind=None):
    """Connected test graph: largest component of an ER or BA sample."""
    if kind is None:
        kind = "er" if rng.random() < 0.5 else "ba"
    if kind == "er":
        n = int(rng.integers(10, max_n + 1))
        p = min(1.0, 3.0 / n + rng.random() * 0.05)
        g = erdos_renyi_graph(n, p, rng)
    else:
        n = int(rng.integers(10, max_n + 1))
        m = int(rng.integers(1, 4))
        g = barabasi_albert_graph(n, m, rng)
    return connected_part(g)


def random_walk_matrix(g):
    return normalize_adjacency(g, NormalizationKind.RANDOM_WALK)
