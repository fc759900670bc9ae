"""PointNet-style per-point encoder with a global max-pooled context feature."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffmat import Node, Tape, affine, col_max, hcat, relu, repeat_rows
from .errors import ContractError, DimensionError
from .geom.types import PointCloud

LOCAL_WIDTHS = (64, 64)
HEAD_WIDTHS = (64,)


@dataclass
class EncoderParams:
    """Dense layers ``(weight out x in, bias 1 x out)`` plus the widths they realise."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    k: int
    local_widths: tuple[int, ...] = LOCAL_WIDTHS
    head_widths: tuple[int, ...] = HEAD_WIDTHS
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = layer_shapes(self.k, self.local_widths, self.head_widths)
        if len(self.weights) != len(expected) or len(self.biases) != len(expected):
            raise DimensionError(f"expected {len(expected)} layers, got {len(self.weights)}")
        for i, ((o, n), w, b) in enumerate(zip(expected, self.weights, self.biases)):
            if w.shape != (o, n) or b.shape != (1, o):
                raise DimensionError(f"layer {i}: weight {w.shape}/bias {b.shape}, expected ({o}, {n})/(1, {o})")

    def arrays(self) -> list[np.ndarray]:
        """Parameters in a fixed order: w0, b0, w1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def with_arrays(self, arrays) -> EncoderParams:
        arrays = list(arrays)
        return EncoderParams(
            [np.array(a) for a in arrays[0::2]],
            [np.array(a) for a in arrays[1::2]],
            self.k,
            self.local_widths,
            self.head_widths,
            dict(self.meta),
        )

    def count(self) -> int:
        return sum(a.size for a in self.arrays())

    def descriptor(self) -> dict:
        return {"k": self.k, "local_widths": list(self.local_widths), "head_widths": list(self.head_widths)}


def layer_shapes(k, local_widths=LOCAL_WIDTHS, head_widths=HEAD_WIDTHS) -> list[tuple[int, int]]:
    shapes = []
    prev = 3
    for w in local_widths:
        shapes.append((w, prev))
        prev = w
    prev = 2 * local_widths[-1]
    for w in head_widths:
        shapes.append((w, prev))
        prev = w
    shapes.append((k, prev))
    return shapes


def init_encoder(k: int, seed, local_widths=LOCAL_WIDTHS, head_widths=HEAD_WIDTHS) -> EncoderParams:
    """Glorot-uniform weights, zero biases."""
    if k < 2:
        raise ContractError(f"embedding size must be >= 2, got {k}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for out, inp in layer_shapes(k, tuple(local_widths), tuple(head_widths)):
        lim = np.sqrt(6.0 / (inp + out))
        weights.append(rng.uniform(-lim, lim, size=(out, inp)))
        biases.append(np.zeros((1, out)))
    return EncoderParams(weights, biases, k, tuple(local_widths), tuple(head_widths))


def param_leaves(tape: Tape, params: EncoderParams) -> list[Node]:
    return [tape.leaf(a) for a in params.arrays()]


def encode(leaves: list[Node], params: EncoderParams, points) -> Node:
    """Embed every point: shared per-point MLP, max-pool, concat, per-point head.

    ``leaves`` are the tape nodes for ``params.arrays()`` so that several
    clouds encoded on one tape share (and accumulate gradients into) the same
    parameters.
    """
    coords = points.coords if isinstance(points, PointCloud) else np.asarray(points, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 3 or coords.shape[0] < 1:
        raise DimensionError(f"expected an n x 3 cloud, got {coords.shape}")
    if len(leaves) != 2 * (len(params.local_widths) + len(params.head_widths) + 1):
        raise DimensionError("parameter leaves do not match the architecture")
    tape = leaves[0].tape
    n = coords.shape[0]
    h = tape.const(coords)
    li = 0
    for _ in params.local_widths:
        h = relu(affine(h, leaves[li], leaves[li + 1]))
        li += 2
    h = hcat(h, repeat_rows(col_max(h), n))
    for _ in params.head_widths:
        h = relu(affine(h, leaves[li], leaves[li + 1]))
        li += 2
    return affine(h, leaves[li], leaves[li + 1])


def embed(params: EncoderParams, points) -> np.ndarray:
    """Forward pass without gradients; returns an n x k array."""
    tape = Tape()
    leaves = [tape.const(a) for a in params.arrays()]
    return encode(leaves, params, points).value
