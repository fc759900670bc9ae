import numpy as np
import pytest
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra as scipy_dijkstra

from symmatch import _kernels as K

BACKENDS = K.available_backends()


def test_fallback_always_available():
    assert "python" in BACKENDS
    assert K.BACKEND in ("python", "cython")


@pytest.mark.parametrize("backend", BACKENDS)
def test_pairwise_dist_matches_brute_force(backend):
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(37, 5)), rng.normal(size=(23, 5))
    brute = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))
    assert np.allclose(K.pairwise_dist(a, b, backend=backend), brute, atol=1e-13, rtol=0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_nearest_rows_ties_to_lowest_index(backend):
    a = np.zeros((1, 2))
    b = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
    assert K.nearest_rows(a, b, backend=backend).tolist() == [0]


@pytest.mark.parametrize("backend", BACKENDS)
def test_dijkstra_matches_scipy(backend):
    rng = np.random.default_rng(1)
    n = 60
    m = sp.random(n, n, density=0.08, random_state=2, data_rvs=lambda k: rng.uniform(0.1, 2.0, k))
    g = sp.csr_matrix(m.maximum(m.T))
    src = np.array([0, 5, 59])
    ours = K.dijkstra(g.indptr, g.indices, g.data, src, backend=backend)
    ref = scipy_dijkstra(g, indices=src)
    assert np.array_equal(np.isinf(ours), np.isinf(ref))
    fin = np.isfinite(ref)
    assert np.allclose(ours[fin], ref[fin], atol=1e-12)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled kernels not built")
def test_backends_agree():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=(300, 24)), rng.normal(size=(250, 24))
    assert np.allclose(K.pairwise_dist(a, b, backend="python"), K.pairwise_dist(a, b, backend="cython"), atol=1e-12)
    assert np.array_equal(K.nearest_rows(a, b, backend="python"), K.nearest_rows(a, b, backend="cython"))


def test_unknown_backend():
    with pytest.raises(ValueError):
        K.pairwise_dist(np.zeros((1, 1)), np.zeros((1, 1)), backend="fortran")
