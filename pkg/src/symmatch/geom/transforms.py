"""Rigid transforms, reflection and symmetric-pair subsampling."""

from __future__ import annotations

import numpy as np

from ..errors import ContractError, SizeError
from .types import IndexMap, PointCloud, ShapePairSample

_AXES = {"x": 0, "y": 1, "z": 2}

# bound on the random tilt away from the vertical (y) axis
MAX_TILT_DEG = 15.0


def flip(p: PointCloud, axis: str = "x") -> PointCloud:
    """Reflect across the plane through the centroid orthogonal to ``axis``."""
    if axis not in _AXES:
        raise ContractError(f"unknown axis {axis!r}")
    c = p.coords.mean(axis=0)
    out = p.coords - c
    out[:, _AXES[axis]] *= -1.0
    return p.with_coords(out + c)


def random_rotation(seed, max_tilt_deg: float = MAX_TILT_DEG, max_yaw_deg: float = 180.0) -> np.ndarray:
    """Uniform yaw about the vertical axis composed with a bounded tilt."""
    rng = np.random.default_rng(seed)
    yaw = np.deg2rad(rng.uniform(-max_yaw_deg, max_yaw_deg))
    tilt = np.deg2rad(max_tilt_deg) * np.sqrt(rng.uniform())
    tilt_dir = rng.uniform(0.0, 2.0 * np.pi)
    axis = np.array([np.cos(tilt_dir), 0.0, np.sin(tilt_dir)])
    return axis_angle(axis, tilt) @ axis_angle(np.array([0.0, 1.0, 0.0]), yaw)


def axis_angle(axis, angle) -> np.ndarray:
    """Rodrigues rotation matrix."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    k = np.array([[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def rotate(p: PointCloud, r: np.ndarray) -> PointCloud:
    """Rotate about the centroid."""
    c = p.coords.mean(axis=0)
    return p.with_coords((p.coords - c) @ r.T + c)


def _pair_sample(sym: np.ndarray, q: int, rng: np.random.Generator) -> np.ndarray:
    """Pick ``q`` indices, taking symmetric partners together whenever possible."""
    n = sym.size
    order = rng.permutation(n)
    chosen = np.zeros(n, dtype=bool)
    picked = 0
    for i in order:
        if picked >= q:
            break
        if chosen[i]:
            continue
        j = sym[i]
        if j != i and not chosen[j]:
            if picked + 2 > q:
                continue
            chosen[j] = True
            picked += 1
        chosen[i] = True
        picked += 1
    if picked < q:
        # only reachable when pairs no longer fit; fill with singletons
        rest = [i for i in order if not chosen[i]][: q - picked]
        chosen[rest] = True
    return np.flatnonzero(chosen)


def restrict_symmetry(sym: IndexMap, keep: np.ndarray, coords: np.ndarray) -> IndexMap:
    """Restrict a symmetry map to the points ``keep``.

    A point whose partner was dropped is sent to the kept point nearest to that
    partner, so the result is an involution whenever ``keep`` is closed under
    ``sym``.
    """
    keep = np.asarray(keep, dtype=np.int64)
    pos = np.full(sym.src_size, -1, dtype=np.int64)
    pos[keep] = np.arange(keep.size)
    partner = sym.targets[keep]
    out = pos[partner]
    missing = np.flatnonzero(out < 0)
    if missing.size:
        from .._kernels import nearest_rows

        out[missing] = nearest_rows(coords[partner[missing]], coords[keep])
    return IndexMap(out, keep.size)


def subsample(s: ShapePairSample, q: int, seed) -> ShapePairSample:
    """Keep ``q`` points of ``x`` (in symmetric pairs) and their images in ``y``."""
    if q > min(s.x.n, s.y.n):
        raise SizeError(f"cannot sample {q} points from shapes of sizes {s.x.n}, {s.y.n}")
    if q == s.x.n and q == s.y.n and s.map_xy.is_injective():
        keep_x = np.arange(q)
    else:
        keep_x = _pair_sample(s.sym_x.targets, q, np.random.default_rng(seed))
    keep_y = np.sort(s.map_xy.targets[keep_x])
    if np.unique(keep_y).size != q:
        raise ContractError("map_xy is not injective on the sampled points")
    pos_y = np.full(s.y.n, -1, dtype=np.int64)
    pos_y[keep_y] = np.arange(q)
    return ShapePairSample(
        x=s.x.take(keep_x),
        y=s.y.take(keep_y),
        map_xy=IndexMap(pos_y[s.map_xy.targets[keep_x]], q),
        sym_x=restrict_symmetry(s.sym_x, keep_x, s.x.coords),
        sym_y=restrict_symmetry(s.sym_y, keep_y, s.y.coords),
        meta={**s.meta, "keep_x": keep_x, "keep_y": keep_y},
    )
