"""Graph geodesics on point clouds (kNN graph) or meshes (edge graph)."""

from __future__ import annotations

import threading

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .. import _kernels
from ..errors import ConnectivityError, ContractError
from .types import PointCloud

DEFAULT_KNN = 8
# zero-length edges (duplicate points) would be dropped by the sparse format
_MIN_EDGE = 1e-12


def knn_edges(coords: np.ndarray, knn: int) -> tuple[np.ndarray, np.ndarray]:
    n = coords.shape[0]
    k = min(knn + 1, n)
    _, nbr = cKDTree(coords).query(coords, k=k)
    rows = np.repeat(np.arange(n), k)
    cols = nbr.reshape(-1)
    keep = rows != cols
    return rows[keep], cols[keep]


def mesh_edges(faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    f = np.asarray(faces, dtype=np.int64)
    rows = np.concatenate([f[:, 0], f[:, 1], f[:, 2]])
    cols = np.concatenate([f[:, 1], f[:, 2], f[:, 0]])
    return rows, cols


def build_graph(coords: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> sp.csr_matrix:
    """Symmetric Euclidean-weighted adjacency in CSR form."""
    n = coords.shape[0]
    w = np.maximum(np.linalg.norm(coords[rows] - coords[cols], axis=1), _MIN_EDGE)
    a = sp.coo_matrix((w, (rows, cols)), shape=(n, n)).tocsr()
    a = a.maximum(a.T).tocsr()
    a.sort_indices()
    return a


class GeodesicField:
    """Shortest-path distances on a fixed graph; rows are computed lazily and cached."""

    def __init__(self, graph: sp.csr_matrix, label: str = ""):
        n_comp, comp = connected_components(graph, directed=False)
        if n_comp > 1:
            sizes = sorted(np.bincount(comp).tolist(), reverse=True)
            raise ConnectivityError(sizes)
        self.graph = graph
        self.label = label
        self.n = graph.shape[0]
        self._indptr = graph.indptr.astype(np.int64)
        self._indices = graph.indices.astype(np.int64)
        self._weights = graph.data.astype(np.float64)
        self._rows: dict[int, np.ndarray] = {}
        self._lock = threading.Lock()
        self._diameter: float | None = None

    def rows(self, sources) -> np.ndarray:
        """Distance rows for ``sources`` as an array of shape (len(sources), n)."""
        sources = np.atleast_1d(np.asarray(sources, dtype=np.int64))
        if sources.size and (sources.min() < 0 or sources.max() >= self.n):
            raise IndexError("geodesic source out of range")
        with self._lock:
            missing = np.unique([s for s in sources.tolist() if s not in self._rows])
            if missing.size:
                block = _kernels.dijkstra(self._indptr, self._indices, self._weights, missing)
                for s, r in zip(missing.tolist(), block):
                    r.setflags(write=False)
                    self._rows[s] = r
            return np.stack([self._rows[s] for s in sources.tolist()]) if sources.size else np.empty((0, self.n))

    def row(self, i: int) -> np.ndarray:
        return self.rows([i])[0]

    def distance(self, i, j) -> np.ndarray:
        """Elementwise distances between index arrays ``i`` and ``j``."""
        i = np.atleast_1d(np.asarray(i, dtype=np.int64))
        j = np.atleast_1d(np.asarray(j, dtype=np.int64))
        if i.shape != j.shape:
            raise ContractError("index arrays must have equal length")
        uniq, inv = np.unique(j, return_inverse=True)
        block = self.rows(uniq)
        # symmetric graph: d(i, j) = d(j, i)
        return block[inv, i]

    def all_pairs(self) -> np.ndarray:
        return self.rows(np.arange(self.n))

    def diameter(self, n_sources: int = 16) -> float:
        """Max distance over ``n_sources`` evenly spaced source points."""
        if self._diameter is None:
            src = np.unique(np.linspace(0, self.n - 1, min(n_sources, self.n)).round().astype(np.int64))
            self._diameter = float(self.rows(src).max())
        return self._diameter


def geodesics(p: PointCloud, knn: int = DEFAULT_KNN) -> GeodesicField:
    """Geodesic field of ``p``: mesh edges if faces exist, else a symmetric kNN graph."""
    if p.faces is not None and len(p.faces):
        rows, cols = mesh_edges(p.faces)
    else:
        rows, cols = knn_edges(p.coords, knn)
    return GeodesicField(build_graph(p.coords, rows, cols), label=p.label)


def path_field(n: int, spacing: float = 1.0) -> GeodesicField:
    """Geodesics of an ``n``-vertex path graph; handy for hand-checked examples."""
    rows = np.arange(n - 1)
    a = sp.coo_matrix((np.full(n - 1, spacing), (rows, rows + 1)), shape=(n, n)).tocsr()
    return GeodesicField(a.maximum(a.T).tocsr(), label=f"path{n}")
