"""Central finite-difference checks for every differentiable operation.

The checks only use forward evaluations, so they stay independent of the
backward rules they verify. Matrix-valued outputs are reduced to a scalar by
an inner product with a fixed random weight matrix, which probes the full
Jacobian rather than a single direction.

A central difference that straddles a ReLU or max-pool switch measures the
average of two one-sided slopes, not the derivative. Coordinates whose
perturbed evaluations change the branch pattern of the forward pass are
therefore left out of the comparison and counted in ``CheckResult.skipped``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import diffmat as dm
from .fmap import self_symmetry_fmap, soft_correspondence, transform_embedding
from .geom.types import IndexMap
from .loss import LossWeights, pair_loss
from .net import encode, init_encoder

OP_TOL = 1e-4
COMPOSITE_TOL = 1e-3
STEP = 1e-5


@dataclass
class CheckResult:
    name: str
    rel_err: float
    tol: float
    checked: int = 0
    skipped: int = 0

    @property
    def passed(self) -> bool:
        return bool(self.rel_err < self.tol)


def numeric_grad(f: Callable[[list[np.ndarray]], float], inputs: list[np.ndarray], which: int, h: float = STEP, coords=None):
    """Central differences of ``f`` w.r.t. ``inputs[which]`` (optionally only at flat ``coords``)."""
    grad, _ = _central(lambda v: (f(v), b""), inputs, which, h, coords)
    return grad if coords is not None else grad.reshape(inputs[which].shape)


def _central(f, inputs, which, h, coords):
    """Differences plus a mask of coordinates where ``f``'s branch signature stayed put."""
    x = inputs[which]
    flat_idx = range(x.size) if coords is None else coords
    out = np.zeros(len(flat_idx))
    smooth = np.ones(len(flat_idx), dtype=bool)
    _, sig0 = f(inputs)
    for j, i in enumerate(flat_idx):
        orig = x.flat[i]
        x.flat[i] = orig + h
        fp, sp = f(inputs)
        x.flat[i] = orig - h
        fm, sm = f(inputs)
        x.flat[i] = orig
        out[j] = (fp - fm) / (2.0 * h)
        smooth[j] = sp == sig0 and sm == sig0
    return out, smooth


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    num = np.linalg.norm(np.ravel(analytic) - np.ravel(numeric))
    den = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-10)
    return float(num / den)


def check(
    name: str,
    build: Callable[[list[dm.Node]], dm.Node],
    inputs: Sequence[np.ndarray],
    tol: float = OP_TOL,
    h: float = STEP,
    rng: np.random.Generator | None = None,
    max_coords: int | None = None,
) -> CheckResult:
    """Compare backward() against central differences for a scalar-valued ``build``."""
    inputs = [np.array(a, dtype=np.float64) for a in inputs]

    def f(vals):
        tape = dm.Tape()
        out = build([tape.leaf(v) for v in vals])
        return float(out.value[0, 0]), dm.branch_signature(tape)

    tape = dm.Tape()
    leaves = [tape.leaf(v) for v in inputs]
    grads = dm.backward(build(leaves))
    worst = 0.0
    checked = skipped = 0
    for i, leaf in enumerate(leaves):
        g = grads[leaf].ravel()
        coords = np.arange(inputs[i].size)
        if max_coords is not None and inputs[i].size > max_coords:
            coords = np.sort((rng or np.random.default_rng(0)).choice(inputs[i].size, max_coords, replace=False))
        num, smooth = _central(f, inputs, i, h, coords)
        checked += int(smooth.sum())
        skipped += int((~smooth).sum())
        if smooth.any():
            worst = max(worst, rel_error(g[coords][smooth], num[smooth]))
    return CheckResult(name, worst, tol, checked, skipped)


def _probe(node: dm.Node, w: np.ndarray) -> dm.Node:
    return dm.sum_all(dm.mul(node, node.tape.const(w)))


def _u(rng, *shape):
    return rng.uniform(-1.0, 1.0, size=shape)


def random_involution(n: int, rng) -> np.ndarray:
    perm = rng.permutation(n)
    t = np.arange(n)
    for a, b in zip(perm[0::2], perm[1::2]):
        t[a], t[b] = b, a
    return t


def op_checks(rng: np.random.Generator) -> list[CheckResult]:
    """One randomized check per differentiable operation."""
    out = []
    w43, w32 = _u(rng, 4, 3), _u(rng, 3, 2)
    out.append(check("matmul", lambda v: _probe(dm.matmul(v[0], v[1]), _u(np.random.default_rng(1), 4, 2)), [w43, w32]))
    out.append(check("frobenius_norm(matmul)", lambda v: dm.frobenius_norm(dm.matmul(v[0], v[1])), [_u(rng, 4, 3), _u(rng, 3, 2)]))
    p = _u(rng, 4, 3)
    out.append(check("add", lambda v: _probe(dm.add(v[0], v[1]), p), [_u(rng, 4, 3), _u(rng, 4, 3)]))
    out.append(check("sub", lambda v: _probe(dm.sub(v[0], v[1]), p), [_u(rng, 4, 3), _u(rng, 4, 3)]))
    out.append(check("scale", lambda v: _probe(dm.scale(v[0], -2.5), p), [_u(rng, 4, 3)]))
    out.append(check("mul", lambda v: _probe(dm.mul(v[0], v[1]), p), [_u(rng, 4, 3), _u(rng, 4, 3)]))
    out.append(check("transpose", lambda v: _probe(dm.transpose(v[0]), p.T.copy()), [_u(rng, 4, 3)]))
    idx = rng.integers(0, 5, size=7)
    p7 = _u(rng, 7, 3)
    out.append(check("gather_rows", lambda v: _probe(dm.gather_rows(v[0], idx), p7), [_u(rng, 5, 3)]))
    out.append(check("sum_all", lambda v: dm.sum_all(dm.mul(v[0], v[0])), [_u(rng, 4, 3)]))
    out.append(check("sum_squares", lambda v: dm.sum_squares(v[0]), [_u(rng, 4, 3)]))
    p56 = _u(rng, 5, 6)
    out.append(
        check("affine", lambda v: _probe(dm.affine(v[0], v[1], v[2]), p56), [_u(rng, 5, 3), _u(rng, 6, 3), _u(rng, 1, 6)])
    )
    out.append(check("relu", lambda v: _probe(dm.relu(v[0]), p), [_u(rng, 4, 3)]))
    out.append(check("col_max", lambda v: _probe(dm.col_max(v[0]), p[:1]), [_u(rng, 4, 3)]))
    out.append(check("repeat_rows", lambda v: _probe(dm.repeat_rows(v[0], 4), p), [_u(rng, 1, 3)]))
    p45 = _u(rng, 4, 5)
    out.append(check("hcat", lambda v: _probe(dm.hcat(v[0], v[1]), p45), [_u(rng, 4, 3), _u(rng, 4, 2)]))
    p55 = _u(rng, 5, 5)
    out.append(check("pairwise_distance", lambda v: _probe(dm.pairwise_distance(v[0], v[1]), p55), [_u(rng, 5, 3), _u(rng, 5, 3)]))
    p56b = _u(rng, 5, 6)
    out.append(check("row_softmax_neg", lambda v: _probe(dm.row_softmax_neg(v[0]), p56b), [_u(rng, 5, 6) * 3.0]))
    p104 = _u(rng, 10, 4)
    out.append(check("ridge_solve", lambda v: _probe(dm.ridge_solve(v[0], v[1], 1e-6), p104), [_u(rng, 30, 10), _u(rng, 30, 4)]))
    sym = IndexMap(random_involution(12, rng), 12)
    p124 = _u(rng, 12, 4)
    out.append(
        check(
            "self_symmetry_fmap+transform_embedding",
            lambda v: _probe(transform_embedding(v[0], self_symmetry_fmap(v[0], v[1], sym)), p124),
            [_u(rng, 12, 4), _u(rng, 12, 4)],
        )
    )
    p88 = _u(rng, 8, 8)
    out.append(check("soft_correspondence", lambda v: _probe(soft_correspondence(v[0], v[1]), p88), [_u(rng, 8, 3), _u(rng, 8, 3)]))
    return out


class _ToyPair:
    def __init__(self, rng, n):
        self.x = _Cloud(_u(rng, n, 3))
        self.y = _Cloud(_u(rng, n, 3))
        self.x_f = _Cloud(_u(rng, n, 3))
        self.y_f = _Cloud(_u(rng, n, 3))
        self.map_xy = IndexMap(rng.permutation(n), n)
        self.sym_x = IndexMap(random_involution(n, rng), n)
        self.sym_y = IndexMap(random_involution(n, rng), n)


class _Cloud:
    def __init__(self, coords):
        self.coords = coords


def composite_checks(rng: np.random.Generator, n: int = 16, k: int = 4) -> list[CheckResult]:
    """Full objective on a 16-point toy pair: w.r.t. the four embeddings and w.r.t. encoder params."""
    pair = _ToyPair(rng, n)
    w = LossWeights(5.0, 5.0)
    out = [
        check(
            "composite(embeddings)",
            lambda v: pair_loss(v[0], v[1], v[2], v[3], pair, w)[0],
            [_u(rng, n, k) * 2.0 for _ in range(4)],
            tol=COMPOSITE_TOL,
        )
    ]
    params = init_encoder(k, rng.integers(2**31))
    clouds = [pair.x.coords, pair.x_f.coords, pair.y.coords, pair.y_f.coords]

    def build(v):
        phis = [encode(v, params, c) for c in clouds]
        return pair_loss(*phis, pair, w)[0]

    out.append(check("composite(encoder params)", build, params.arrays(), tol=COMPOSITE_TOL, rng=rng, max_coords=12))
    return out


def run_suite(reps: int = 20, seed: int = 0) -> list[CheckResult]:
    """All operation checks and composite checks, ``reps`` randomized repetitions each."""
    results = []
    for r in range(reps):
        rng = np.random.default_rng(np.random.SeedSequence([seed, r]))
        for c in op_checks(rng) + composite_checks(rng):
            c.name = f"{c.name}[{r}]"
            results.append(c)
    return results


def summarize(results: list[CheckResult]) -> dict:
    worst: dict[str, CheckResult] = {}
    for c in results:
        base = c.name.split("[")[0]
        if base not in worst or c.rel_err > worst[base].rel_err:
            worst[base] = c
    return worst


def main_report(reps: int = 20, seed: int = 0, out=print) -> bool:
    t0 = time.perf_counter()
    results = run_suite(reps, seed)
    ok = all(c.passed for c in results)
    for base, c in summarize(results).items():
        out(f"{'PASS' if c.passed else 'FAIL'}  {base:42s} worst rel err {c.rel_err:.2e} (tol {c.tol:g})")
    skipped = sum(c.skipped for c in results)
    total = skipped + sum(c.checked for c in results)
    out(f"{skipped} of {total} coordinates skipped at activation switches")
    out(f"{len(results)} checks, {sum(not c.passed for c in results)} failed, {time.perf_counter() - t0:.1f}s")
    return ok
