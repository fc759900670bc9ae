from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..errors import ContractError, DimensionError


@dataclass(frozen=True, eq=False)
class PointCloud:
    """``n x 3`` coordinates with optional triangle faces."""

    coords: np.ndarray
    faces: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != 3:
            raise DimensionError(f"point cloud coords must be n x 3, got {coords.shape}")
        if coords.shape[0] < 4:
            raise ContractError(f"point cloud needs at least 4 points, got {coords.shape[0]}")
        if not np.isfinite(coords).all():
            raise ContractError("point cloud has non-finite coordinates")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        if self.faces is not None:
            faces = np.array(self.faces, dtype=np.int64).reshape(-1, 3)
            if faces.size and (faces.min() < 0 or faces.max() >= coords.shape[0]):
                raise ContractError("face index out of range")
            faces.setflags(write=False)
            object.__setattr__(self, "faces", faces)

    def __len__(self):
        return self.coords.shape[0]

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    def with_coords(self, coords, label=None) -> PointCloud:
        return PointCloud(coords, self.faces, self.label if label is None else label)

    def take(self, idx) -> PointCloud:
        """Sub-cloud of the given points; faces are dropped."""
        return PointCloud(self.coords[np.asarray(idx)], None, self.label)

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented
        same_faces = (self.faces is None and other.faces is None) or (
            self.faces is not None and other.faces is not None and np.array_equal(self.faces, other.faces)
        )
        return np.array_equal(self.coords, other.coords) and same_faces and self.label == other.label


@dataclass(frozen=True, eq=False)
class IndexMap:
    """Pointwise map: ``targets[i]`` is the destination index of source point ``i``."""

    targets: np.ndarray
    dst_size: int

    def __post_init__(self):
        t = np.array(self.targets, dtype=np.int64).ravel()
        if t.size and (t.min() < 0 or t.max() >= self.dst_size):
            raise ContractError(f"map target out of range for destination size {self.dst_size}")
        t.setflags(write=False)
        object.__setattr__(self, "targets", t)
        object.__setattr__(self, "dst_size", int(self.dst_size))

    @classmethod
    def identity(cls, n: int) -> IndexMap:
        return cls(np.arange(n), n)

    @property
    def src_size(self) -> int:
        return self.targets.size

    def __len__(self):
        return self.targets.size

    def __getitem__(self, i):
        return self.targets[i]

    def as_matrix(self) -> np.ndarray:
        """Dense 0/1 matrix with exactly one 1 per row."""
        m = np.zeros((self.src_size, self.dst_size))
        m[np.arange(self.src_size), self.targets] = 1.0
        return m

    def then(self, other: IndexMap) -> IndexMap:
        """Composition: apply ``self`` first, then ``other``."""
        if other.src_size != self.dst_size:
            raise DimensionError("map composition size mismatch")
        return IndexMap(other.targets[self.targets], other.dst_size)

    def is_involution(self) -> bool:
        return self.src_size == self.dst_size and np.array_equal(self.targets[self.targets], np.arange(self.src_size))

    def is_injective(self) -> bool:
        return np.unique(self.targets).size == self.src_size

    def __eq__(self, other):
        if not isinstance(other, IndexMap):
            return NotImplemented
        return self.dst_size == other.dst_size and np.array_equal(self.targets, other.targets)


@dataclass(eq=False)
class ShapePairSample:
    """Source/target shapes with ground-truth correspondence and self-symmetries.

    ``map_xy`` sends every point of ``x`` to a point of ``y``; ``sym_x`` and
    ``sym_y`` send every point to its bilateral partner (indices are shared
    with the flipped copy of each shape).
    """

    x: PointCloud
    y: PointCloud
    map_xy: IndexMap
    sym_x: IndexMap
    sym_y: IndexMap
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.map_xy.src_size != self.x.n or self.map_xy.dst_size != self.y.n:
            raise DimensionError("map_xy does not match cloud sizes")
        for sym, cloud, name in ((self.sym_x, self.x, "sym_x"), (self.sym_y, self.y, "sym_y")):
            if sym.src_size != cloud.n or sym.dst_size != cloud.n:
                raise DimensionError(f"{name} does not match cloud size")
