"""Hot kernels with a compiled backend and a pure-Python fallback.

The compiled extension is used when it was built; set ``SYMMATCH_PURE_PYTHON=1``
to force the fallback. Both backends share the signatures below and the same
tie-breaking rules (lowest index wins in :func:`nearest_rows`).
"""

import os

import numpy as np

from . import _pykernels

_impl = _pykernels
BACKEND = "python"

if os.environ.get("SYMMATCH_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _i64(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def pairwise_dist(a, b, backend=None):
    """Euclidean distances between rows of ``a`` (n_a x k) and ``b`` (n_b x k)."""
    impl = _select(backend)
    return impl.pairwise_dist(_f64(a), _f64(b))


def nearest_rows(a, b, backend=None):
    """Index of the nearest row of ``b`` for every row of ``a``; exact search."""
    impl = _select(backend)
    return impl.nearest_rows(_f64(a), _f64(b))


def dijkstra(indptr, indices, weights, sources, backend=None):
    """Shortest-path distances from each source over a CSR graph.

    Returns an array of shape ``(len(sources), n)``; unreachable nodes are inf.
    """
    impl = _select(backend)
    return impl.dijkstra(_i64(indptr), _i64(indices), _f64(weights), _i64(np.atleast_1d(sources)))


def _select(backend):
    if backend is None:
        return _impl
    if backend == "python":
        return _pykernels
    if backend == "cython":
        if BACKEND != "cython":
            raise RuntimeError("compiled kernels are not available")
        return _impl
    raise ValueError(f"unknown backend {backend!r}")


def available_backends():
    return ["python", "cython"] if BACKEND == "cython" else ["python"]
