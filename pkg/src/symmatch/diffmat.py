"""Dense matrices with tape-based reverse-mode differentiation.

Every value is a 2-D float64 array. Operations evaluate eagerly and record a
backward closure on the :class:`Tape` that owns their inputs; :func:`backward`
replays the tape in reverse creation order.

    >>> tape = Tape()
    >>> a = tape.leaf(np.ones((2, 3)))
    >>> grads = backward(sum_all(a))
    >>> grads[a]
    array([[1., 1., 1.],
           [1., 1., 1.]])
"""

from __future__ import annotations

import hashlib
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from . import _kernels
from .errors import ContractError, DimensionError, NonFiniteError, SingularityError

DIST_FLOOR = 1e-9
DEFAULT_RIDGE_EPS = 1e-6


class Node:
    __slots__ = ("tape", "id", "value", "parents", "grad_fn", "requires_grad", "op")

    def __init__(self, tape, idx, value, parents, grad_fn, requires_grad, op):
        self.tape = tape
        self.id = idx
        self.value = value
        self.parents = parents
        self.grad_fn = grad_fn
        self.requires_grad = requires_grad
        self.op = op

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    @property
    def T(self) -> Node:
        return transpose(self)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Node):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Node({self.op}, id={self.id}, shape={self.shape})"


class Tape:
    """Ordered record of nodes. Single owner; not safe to share across threads."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __len__(self):
        return len(self.nodes)

    def leaf(self, value, requires_grad: bool = True) -> Node:
        return self._record("leaf", _as_mat(value, "leaf"), (), None, requires_grad)

    def const(self, value) -> Node:
        return self.leaf(value, requires_grad=False)

    def _record(self, op, value, parents, grad_fn, requires_grad=None):
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in parents)
        if not requires_grad:
            grad_fn = None
        node = Node(self, len(self.nodes), value, parents, grad_fn, requires_grad, op)
        self.nodes.append(node)
        return node


class GradMap:
    """Gradients of a scalar root keyed by node; missing leaves read as zeros."""

    def __init__(self, grads: dict[int, np.ndarray], tape: Tape):
        self._grads = grads
        self._tape = tape

    def __getitem__(self, node: Node) -> np.ndarray:
        g = self._grads.get(node.id)
        if g is None:
            return np.zeros(node.shape)
        return g

    def __contains__(self, node: Node) -> bool:
        return node.id in self._grads

    def __len__(self):
        return len(self._grads)

    def leaves(self):
        return [self._tape.nodes[i] for i in sorted(self._grads)]


def _as_mat(value, op) -> np.ndarray:
    arr = np.array(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise DimensionError(f"{op}: expected a matrix, got ndim={arr.ndim}")
    _check_finite(arr, op)
    return arr


def _check_finite(arr, op):
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"{op}: non-finite value produced")


def _tape_of(*nodes: Node) -> Tape:
    tape = nodes[0].tape
    for n in nodes[1:]:
        if n.tape is not tape:
            raise ContractError("operands belong to different tapes")
    return tape


def _emit(op: str, value: np.ndarray, parents: Sequence[Node], grad_fn: Callable) -> Node:
    _check_finite(value, op)
    return _tape_of(*parents)._record(op, value, tuple(parents), grad_fn)


def _lift(x, like: Node) -> Node:
    if isinstance(x, Node):
        return x
    return like.tape.const(x)


# ---------------------------------------------------------------- linear ops


def matmul(a: Node, b: Node) -> Node:
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: {a.shape} @ {b.shape}")
    av, bv = a.value, b.value
    return _emit("matmul", av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def add(a: Node, b) -> Node:
    if not isinstance(b, Node):
        s = float(b)
        return _emit("add_scalar", a.value + s, (a,), lambda g: (g,))
    b = _lift(b, a)
    if a.shape != b.shape:
        raise DimensionError(f"add: {a.shape} + {b.shape}")
    return _emit("add", a.value + b.value, (a, b), lambda g: (g, g))


def sub(a: Node, b) -> Node:
    if not isinstance(b, Node):
        return add(a, -float(b))
    if a.shape != b.shape:
        raise DimensionError(f"sub: {a.shape} - {b.shape}")
    return _emit("sub", a.value - b.value, (a, b), lambda g: (g, -g))


def scale(a: Node, s: float) -> Node:
    s = float(s)
    return _emit("scale", a.value * s, (a,), lambda g: (g * s,))


def mul(a: Node, b: Node) -> Node:
    """Elementwise product."""
    if a.shape != b.shape:
        raise DimensionError(f"mul: {a.shape} * {b.shape}")
    av, bv = a.value, b.value
    return _emit("mul", av * bv, (a, b), lambda g: (g * bv, g * av))


def transpose(a: Node) -> Node:
    return _emit("transpose", a.value.T.copy(), (a,), lambda g: (g.T,))


def gather_rows(a: Node, idx) -> Node:
    """Rows ``a[idx]``; the backward pass scatters (with accumulation) into ``a``."""
    idx = np.asarray(idx, dtype=np.int64).ravel()
    n = a.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"gather_rows: index out of range for {n} rows")

    def grad_fn(g):
        out = np.zeros_like(a.value)
        np.add.at(out, idx, g)
        return (out,)

    return _emit("gather_rows", a.value[idx], (a,), grad_fn)


def sum_all(a: Node) -> Node:
    shape = a.shape
    return _emit("sum_all", np.array([[a.value.sum()]]), (a,), lambda g: (np.full(shape, g[0, 0]),))


def sum_squares(a: Node) -> Node:
    av = a.value
    return _emit("sum_squares", np.array([[np.sum(av * av)]]), (a,), lambda g: (2.0 * g[0, 0] * av,))


def frobenius_norm(a: Node) -> Node:
    av = a.value
    norm = float(np.sqrt(np.sum(av * av)))

    def grad_fn(g):
        if norm == 0.0:
            return (np.zeros_like(av),)
        return (g[0, 0] / norm * av,)

    return _emit("frobenius_norm", np.array([[norm]]), (a,), grad_fn)


# ------------------------------------------------------------ network pieces


def affine(x: Node, w: Node, b: Node) -> Node:
    """Row-wise dense layer ``x @ w.T + b`` with ``w`` (out x in) and ``b`` (1 x out)."""
    if x.shape[1] != w.shape[1] or b.shape != (1, w.shape[0]):
        raise DimensionError(f"affine: x{x.shape}, w{w.shape}, b{b.shape}")
    xv, wv = x.value, w.value
    return _emit("affine", xv @ wv.T + b.value, (x, w, b), lambda g: (g @ wv, g.T @ xv, g.sum(axis=0, keepdims=True)))


def relu(a: Node) -> Node:
    mask = a.value > 0
    return _emit("relu", np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def col_max(a: Node) -> Node:
    """Max over rows (global max-pool). Ties route gradient to the lowest row."""
    arg = np.argmax(a.value, axis=0)
    cols = np.arange(a.shape[1])
    shape = a.shape

    def grad_fn(g):
        out = np.zeros(shape)
        out[arg, cols] = g[0]
        return (out,)

    return _emit("col_max", a.value[arg, cols][None, :], (a,), grad_fn)


def repeat_rows(a: Node, n: int) -> Node:
    if a.shape[0] != 1:
        raise DimensionError(f"repeat_rows: expected a row vector, got {a.shape}")
    return _emit("repeat_rows", np.repeat(a.value, n, axis=0), (a,), lambda g: (g.sum(axis=0, keepdims=True),))


def hcat(a: Node, b: Node) -> Node:
    if a.shape[0] != b.shape[0]:
        raise DimensionError(f"hcat: {a.shape} | {b.shape}")
    ka = a.shape[1]
    return _emit("hcat", np.hstack([a.value, b.value]), (a, b), lambda g: (g[:, :ka], g[:, ka:]))


# -------------------------------------------------------- correspondence ops


def pairwise_distance(a: Node, b: Node) -> Node:
    """Plain Euclidean distances between rows of ``a`` and rows of ``b``."""
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"pairwise_distance: {a.shape} vs {b.shape}")
    av, bv = a.value, b.value
    d = _kernels.pairwise_dist(av, bv)

    def grad_fn(g):
        w = g / np.maximum(d, DIST_FLOOR)
        ga = av * w.sum(axis=1, keepdims=True) - w @ bv
        gb = bv * w.sum(axis=0)[:, None] - w.T @ av
        return ga, gb

    return _emit("pairwise_distance", d, (a, b), grad_fn)


def row_softmax_neg(d: Node) -> Node:
    """Row-wise softmax of ``-d``."""
    dv = d.value
    e = np.exp(-(dv - dv.min(axis=1, keepdims=True)))
    s = e / e.sum(axis=1, keepdims=True)

    def grad_fn(g):
        return (-s * (g - np.sum(g * s, axis=1, keepdims=True)),)

    return _emit("row_softmax_neg", s, (d,), grad_fn)


def ridge_solve(a: Node, b: Node, eps: float = DEFAULT_RIDGE_EPS) -> Node:
    """``(AᵀA + eps·I)⁻¹ AᵀB``, the regularized pseudo-inverse applied to ``B``.

    The backward pass differentiates through the inverse:
    with ``M = AᵀA + eps·I``, ``X = M⁻¹AᵀB`` and ``Z = M⁻¹G``,
    ``dB = A Z`` and ``dA = B Zᵀ - A (Z Xᵀ + X Zᵀ)``.
    """
    n, k = a.shape
    if b.shape[0] != n:
        raise DimensionError(f"ridge_solve: a{a.shape}, b{b.shape}")
    if n < k:
        raise DimensionError(f"ridge_solve: need rows >= cols, got a{a.shape}")
    if eps < 0:
        raise ContractError("ridge_solve: eps must be >= 0")
    av, bv = a.value, b.value
    m = av.T @ av
    m[np.diag_indices(k)] += eps
    factor = _cholesky(m, f"ridge_solve(a{a.shape}, b{b.shape}, eps={eps:g})")
    x = scipy.linalg.cho_solve(factor, av.T @ bv)

    def grad_fn(g):
        z = scipy.linalg.cho_solve(factor, g)
        w = z @ x.T
        return bv @ z.T - av @ (w + w.T), av @ z

    return _emit("ridge_solve", x, (a, b), grad_fn)


def _cholesky(m, what):
    try:
        c, lower = scipy.linalg.cho_factor(m, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularityError(f"{what}: normal matrix is singular") from exc
    diag = np.abs(np.diag(c))
    if diag.min() <= 1e-7 * diag.max():
        raise SingularityError(f"{what}: normal matrix is numerically singular")
    return c, lower


# ----------------------------------------------------------------- backward


def branch_signature(tape: Tape) -> bytes:
    """Which side of every kink the recorded forward pass took.

    Covers ReLU masks, max-pool argmaxes and floored distances. Two evaluations
    with equal signatures lie on the same smooth piece of the function.
    """
    h = hashlib.sha256()
    for node in tape.nodes:
        if node.op == "relu":
            h.update(np.packbits(node.parents[0].value > 0).tobytes())
        elif node.op == "col_max":
            h.update(np.argmax(node.parents[0].value, axis=0).astype(np.int64).tobytes())
        elif node.op == "pairwise_distance":
            h.update(np.packbits(node.value < DIST_FLOOR).tobytes())
    return h.digest()


def backward(root: Node) -> GradMap:
    """Gradients of a 1x1 ``root`` with respect to every leaf that requires them."""
    if root.shape != (1, 1):
        raise ContractError(f"backward: root must be 1x1, got {root.shape}")
    tape = root.tape
    grads: dict[int, np.ndarray] = {}
    leaf_grads: dict[int, np.ndarray] = {}
    if not root.requires_grad:
        return GradMap(leaf_grads, tape)
    grads[root.id] = np.ones((1, 1))
    for node in reversed(tape.nodes[: root.id + 1]):
        g = grads.pop(node.id, None)
        if g is None:
            continue
        if node.grad_fn is None:
            if node.op == "leaf":
                leaf_grads[node.id] = g
            continue
        for parent, pg in zip(node.parents, node.grad_fn(g)):
            if not parent.requires_grad:
                continue
            prev = grads.get(parent.id)
            grads[parent.id] = pg if prev is None else prev + pg
    return GradMap(leaf_grads, tape)
