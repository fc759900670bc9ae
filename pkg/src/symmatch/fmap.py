"""Functional-map solves, soft correspondences and nearest-neighbour conversion."""

from __future__ import annotations

import numpy as np
import scipy.linalg

from . import _kernels
from .diffmat import (
    DEFAULT_RIDGE_EPS,
    Node,
    _cholesky,
    gather_rows,
    matmul,
    pairwise_distance,
    ridge_solve,
    row_softmax_neg,
    transpose,
)
from .errors import ContractError, DimensionError
from .geom.types import IndexMap


def self_symmetry_fmap(phi: Node, phi_f: Node, sym: IndexMap, eps: float = DEFAULT_RIDGE_EPS) -> Node:
    """Least-squares ``C`` with ``phi @ C.T ≈ Π phi_f``, where ``Π`` is the symmetry map.

    Computed as ``(phi⁺ Π phi_f)ᵀ`` through a ridge-regularized solve, so
    gradients reach both embeddings.
    """
    if phi.shape != phi_f.shape:
        raise DimensionError(f"embeddings differ in shape: {phi.shape} vs {phi_f.shape}")
    if sym.src_size != phi.shape[0] or sym.dst_size != phi_f.shape[0]:
        raise DimensionError("symmetry map does not match embedding rows")
    return transpose(ridge_solve(phi, gather_rows(phi_f, sym.targets), eps))


def transform_embedding(phi: Node, c: Node) -> Node:
    """``phi @ c.T``."""
    if phi.shape[1] != c.shape[1]:
        raise DimensionError(f"embedding k={phi.shape[1]} vs map {c.shape}")
    return matmul(phi, transpose(c))


def soft_correspondence(a: Node, b: Node) -> Node:
    """Row-stochastic soft map from rows of ``a`` to rows of ``b``."""
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"embedding sizes differ: {a.shape[1]} vs {b.shape[1]}")
    return row_softmax_neg(pairwise_distance(a, b))


def generic_fmap_solve(desc_a, desc_b, alpha: float = 0.0, reg=None) -> np.ndarray:
    """Closed-form minimizer of ``‖C A − B‖² + alpha ‖C ∘ R‖²``.

    ``desc_a``/``desc_b`` are k x d descriptor coefficient matrices. Each row
    of ``C`` decouples into its own ridge system
    ``(A Aᵀ + alpha diag(R_i²)) c_i = A b_i``. Without ``reg`` the penalty is a
    plain Frobenius ridge.
    """
    a = np.asarray(desc_a, dtype=np.float64)
    b = np.asarray(desc_b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"descriptor shapes differ: {a.shape} vs {b.shape}")
    if alpha < 0:
        raise ContractError("alpha must be >= 0")
    k = a.shape[0]
    r2 = np.ones((k, k)) if reg is None else np.asarray(reg, dtype=np.float64) ** 2
    if r2.shape != (k, k):
        raise DimensionError(f"regularizer must be {k}x{k}")
    gram = a @ a.T
    rhs = a @ b.T  # column i is A b_i
    c = np.empty((k, k))
    for i in range(k):
        factor = _cholesky(gram + alpha * np.diag(r2[i]), f"generic_fmap_solve row {i}")
        c[i] = scipy.linalg.cho_solve(factor, rhs[:, i])
    return c


def fmap_to_pointmap(phi_x, phi_y, c=None) -> IndexMap:
    """Nearest row of ``phi_y`` for every row of ``phi_x @ c.T`` (ties: lowest index)."""
    px = _values(phi_x)
    py = _values(phi_y)
    if c is not None:
        c = _values(c)
        if c.shape[1] != px.shape[1]:
            raise DimensionError(f"map {c.shape} incompatible with k={px.shape[1]}")
        px = px @ c.T
    if px.shape[1] != py.shape[1]:
        raise DimensionError(f"embedding sizes differ: {px.shape[1]} vs {py.shape[1]}")
    return IndexMap(_kernels.nearest_rows(px, py), py.shape[0])


def nn_correspondence(phi_x, phi_y) -> IndexMap:
    """Exact nearest-neighbour matching between two embeddings."""
    return fmap_to_pointmap(phi_x, phi_y)


def _values(x) -> np.ndarray:
    return x.value if isinstance(x, Node) else np.asarray(x, dtype=np.float64)
