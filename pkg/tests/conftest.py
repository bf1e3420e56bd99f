import numpy as np
import pytest
from hypothesis import settings

from sgnn.data import SbmSpec, generate_sbm
from sgnn.graph import SparseGraph

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def central_diff(f, x, h=1e-5):
    """Central finite-difference gradient of scalar ``f`` at array ``x``."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-30))


@pytest.fixture
def triangle():
    return SparseGraph.from_edges(3, [0, 1, 0], [1, 2, 2])


@pytest.fixture(scope="session")
def small_sbm():
    return generate_sbm(SbmSpec(blocks=4, nodes_per_block=50, p_in=0.2, p_out=0.02,
                                feature_dim=8, feature_noise=0.5, seed=3))


def random_graph(rng, n, p=0.1):
    iu, ju = np.triu_indices(n, 1)
    hit = rng.random(iu.size) < p
    return SparseGraph.from_edges(n, iu[hit], ju[hit])
