"""Training losses: symmetry-linearity, Euclidean transfer, and commutativity.

All three act on soft correspondences built from embeddings. Point-transfer
losses average squared row errors over points; the commutativity loss is a
Frobenius norm normalized by ``sqrt(n_x * n_y)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .diffmat import DEFAULT_RIDGE_EPS, Node, add, frobenius_norm, matmul, scale, sub, sum_squares
from .errors import DimensionError
from .fmap import self_symmetry_fmap, soft_correspondence, transform_embedding
from .geom.types import IndexMap

FULL_WEIGHTS = (5.0, 5.0)
PARTIAL_WEIGHTS = (1.0, 0.1)


@dataclass(frozen=True)
class LossWeights:
    lam: float = FULL_WEIGHTS[0]
    gamma: float = FULL_WEIGHTS[1]

    def __post_init__(self):
        if self.lam < 0 or self.gamma < 0:
            raise ValueError("loss weights must be non-negative")

    @classmethod
    def for_mode(cls, mode: str) -> LossWeights:
        if mode == "full":
            return cls(*FULL_WEIGHTS)
        if mode == "partial":
            return cls(*PARTIAL_WEIGHTS)
        raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class LossBreakdown:
    l_euc: float
    l_lin: float
    l_comm: float
    l_total: float

    def as_dict(self):
        return asdict(self)


def transfer_error(s: Node, target_coords: np.ndarray, gt: IndexMap) -> Node:
    """Mean over source points of ``‖(S P)_i − P_{gt(i)}‖²``."""
    if s.shape != (gt.src_size, target_coords.shape[0]) or gt.dst_size != target_coords.shape[0]:
        raise DimensionError(f"soft map {s.shape} vs map {gt.src_size}->{gt.dst_size}")
    tape = s.tape
    p = tape.const(target_coords)
    diff = sub(matmul(s, p), tape.const(target_coords[gt.targets]))
    return scale(sum_squares(diff), 1.0 / gt.src_size)


def symmetry_softmap(phi: Node, phi_f: Node, sym: IndexMap, eps: float = DEFAULT_RIDGE_EPS) -> Node:
    """Soft self-symmetry map from ``phi C_symᵀ`` to ``phi_f``."""
    c = self_symmetry_fmap(phi, phi_f, sym, eps)
    return soft_correspondence(transform_embedding(phi, c), phi_f)


def loss_lin(phi: Node, phi_f: Node, sym: IndexMap, p_f: np.ndarray, eps: float = DEFAULT_RIDGE_EPS) -> Node:
    """Symmetry-linearity loss for one shape; sum it over both shapes of a pair."""
    return transfer_error(symmetry_softmap(phi, phi_f, sym, eps), np.asarray(p_f, dtype=np.float64), sym)


def loss_euc(phi_x: Node, phi_y: Node, map_xy: IndexMap, p_y: np.ndarray) -> Node:
    """Pairwise transfer loss on the raw (untransformed) embeddings."""
    if map_xy.src_size != phi_x.shape[0]:
        raise DimensionError(f"map has {map_xy.src_size} sources, embedding has {phi_x.shape[0]} rows")
    return transfer_error(soft_correspondence(phi_x, phi_y), np.asarray(p_y, dtype=np.float64), map_xy)


def loss_comm(s_xy: Node, s_xxf: Node, s_yyf: Node) -> Node:
    """``‖S_XY S_YYf − S_XXf S_XY‖_F / sqrt(n_x n_y)``."""
    nx, ny = s_xy.shape
    if s_xxf.shape != (nx, nx) or s_yyf.shape != (ny, ny):
        raise DimensionError(f"soft maps {s_xy.shape}, {s_xxf.shape}, {s_yyf.shape} do not compose")
    return scale(frobenius_norm(sub(matmul(s_xy, s_yyf), matmul(s_xxf, s_xy))), 1.0 / math.sqrt(nx * ny))


def loss_total(l_euc: Node, l_lin: Node, l_comm: Node, w: LossWeights) -> tuple[Node, LossBreakdown]:
    total = add(add(l_euc, scale(l_lin, w.lam)), scale(l_comm, w.gamma))
    parts = (float(l_euc.value[0, 0]), float(l_lin.value[0, 0]), float(l_comm.value[0, 0]))
    return total, LossBreakdown(*parts, float(total.value[0, 0]))


def pair_loss(phi_x, phi_xf, phi_y, phi_yf, sample, w: LossWeights, eps: float = DEFAULT_RIDGE_EPS):
    """Full objective for one (already flipped) pair; returns ``(total node, breakdown)``.

    ``sample`` supplies the maps and the flipped coordinates through the
    attributes ``x_f``, ``y_f``, ``map_xy``, ``sym_x``, ``sym_y`` and the
    target coordinates ``y``.
    """
    s_xxf = symmetry_softmap(phi_x, phi_xf, sample.sym_x, eps)
    s_yyf = symmetry_softmap(phi_y, phi_yf, sample.sym_y, eps)
    l_lin = add(
        transfer_error(s_xxf, sample.x_f.coords, sample.sym_x),
        transfer_error(s_yyf, sample.y_f.coords, sample.sym_y),
    )
    s_xy = soft_correspondence(phi_x, phi_y)
    l_euc = transfer_error(s_xy, sample.y.coords, sample.map_xy)
    l_comm = loss_comm(s_xy, s_xxf, s_yyf)
    return loss_total(l_euc, l_lin, l_comm, w)
