import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symmatch import diffmat as dm
from symmatch.errors import DimensionError
from symmatch.fmap import (
    fmap_to_pointmap,
    generic_fmap_solve,
    nn_correspondence,
    self_symmetry_fmap,
    soft_correspondence,
    transform_embedding,
)
from symmatch.geom import IndexMap
from symmatch.gradcheck import check, random_involution


def fmap_value(phi, phi_f, sym, eps=0.0):
    t = dm.Tape()
    return self_symmetry_fmap(t.const(phi), t.const(phi_f), sym, eps).value


def lstsq_fmap(phi, phi_f, sym):
    """Independent oracle: SVD least squares of phi X = Π phi_f, C = Xᵀ."""
    return np.linalg.lstsq(phi, phi_f[sym.targets], rcond=None)[0].T


def lstsq_generic(a, b, alpha, reg):
    k = a.shape[0]
    r = np.ones((k, k)) if reg is None else reg
    c = np.empty((k, k))
    for i in range(k):
        lhs = np.vstack([a.T, np.sqrt(alpha) * np.diag(r[i])])
        rhs = np.concatenate([b[i], np.zeros(k)])
        c[i] = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
    return c


def test_identity_and_swap():
    assert np.allclose(fmap_value(np.eye(4), np.eye(4), IndexMap.identity(4)), np.eye(4), atol=1e-14)
    c = fmap_value(np.eye(2), np.eye(2), IndexMap(np.array([1, 0]), 2))
    assert np.allclose(c, [[0, 1], [1, 0]], atol=1e-14)


@pytest.mark.parametrize("seed", range(10))
def test_self_symmetry_fmap_matches_lstsq(seed):
    rng = np.random.default_rng(seed)
    n, k = 40, 8
    phi, phi_f = rng.normal(size=(n, k)), rng.normal(size=(n, k))
    sym = IndexMap(random_involution(n, rng), n)
    c = fmap_value(phi, phi_f, sym)
    oracle = lstsq_fmap(phi, phi_f, sym)
    assert np.max(np.abs(c - oracle)) <= 1e-8
    res = np.linalg.norm(phi @ c.T - phi_f[sym.targets])
    assert abs(res - np.linalg.norm(phi @ oracle.T - phi_f[sym.targets])) <= 1e-8


@pytest.mark.parametrize("seed", range(20))
def test_first_order_optimality(seed):
    rng = np.random.default_rng(100 + seed)
    n, k = int(rng.integers(12, 41)), int(rng.integers(2, 11))
    phi, phi_f = rng.normal(size=(n, k)), rng.normal(size=(n, k))
    sym = IndexMap(random_involution(n, rng), n)
    c = fmap_value(phi, phi_f, sym, eps=1e-6)
    target = phi_f[sym.targets]
    base = np.linalg.norm(phi @ c.T - target)
    for _ in range(10):
        d = rng.normal(size=c.shape)
        d *= 1e-3 / np.linalg.norm(d)
        assert np.linalg.norm(phi @ (c + d).T - target) >= base


def test_transform_embedding_examples():
    t = dm.Tape()
    phi = np.random.default_rng(0).normal(size=(5, 3))
    assert np.array_equal(transform_embedding(t.const(phi), t.const(np.eye(3))).value, phi)
    pi = IndexMap(np.array([2, 0, 1]), 3).as_matrix()
    assert np.array_equal(transform_embedding(t.const(np.eye(3)), t.const(pi.T)).value, pi)


def test_transform_embedding_gradient_reaches_both():
    rng = np.random.default_rng(1)
    w = rng.uniform(-1, 1, (6, 3))
    r = check(
        "transform",
        lambda v: dm.sum_all(dm.mul(transform_embedding(v[0], v[1]), v[0].tape.const(w))),
        [rng.uniform(-1, 1, (6, 3)), rng.uniform(-1, 1, (3, 3))],
    )
    assert r.rel_err < 1e-4


def test_soft_correspondence_limits():
    t = dm.Tape()
    far = 10.0 * np.eye(5)
    s = soft_correspondence(t.const(far), t.const(far)).value
    assert np.max(np.abs(s - np.diag(np.diag(s)))) < 1e-3
    same = np.ones((4, 3))
    assert np.allclose(soft_correspondence(t.const(same), t.const(same)).value, 0.25, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 12), st.integers(1, 12))
def test_soft_correspondence_row_stochastic(seed, na, nb):
    rng = np.random.default_rng(seed)
    t = dm.Tape()
    s = soft_correspondence(t.const(rng.normal(size=(na, 4))), t.const(rng.normal(size=(nb, 4)))).value
    assert np.all(s > 0)
    assert np.allclose(s.sum(axis=1), 1.0, atol=1e-12)


def test_generic_solve_examples():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=(5, 5)), rng.normal(size=(5, 5))
    assert np.allclose(generic_fmap_solve(a, b), b @ np.linalg.inv(a), atol=1e-9)
    a, b = rng.normal(size=(5, 30)), rng.normal(size=(5, 30))
    assert np.linalg.norm(generic_fmap_solve(a, b, alpha=1e9)) < 1e-6


@pytest.mark.parametrize("seed", range(10))
def test_generic_solve_matches_lstsq(seed):
    rng = np.random.default_rng(200 + seed)
    k, d = int(rng.integers(2, 11)), int(rng.integers(12, 41))
    a, b = rng.normal(size=(k, d)), rng.normal(size=(k, d))
    reg = rng.uniform(0, 2, size=(k, k))
    alpha = float(rng.uniform(0, 3))
    assert np.max(np.abs(generic_fmap_solve(a, b, alpha, reg) - lstsq_generic(a, b, alpha, reg))) <= 1e-8


def test_generic_solve_shape_errors():
    with pytest.raises(DimensionError):
        generic_fmap_solve(np.ones((3, 4)), np.ones((3, 5)))


def test_pointmap_examples():
    rng = np.random.default_rng(3)
    phi = rng.normal(size=(30, 6))
    assert np.array_equal(fmap_to_pointmap(phi, phi, np.eye(6)).targets, np.arange(30))
    perm = rng.permutation(30)
    # row j of phi_y is row perm[j] of phi, so x_i lands at perm⁻¹(i)
    assert np.array_equal(fmap_to_pointmap(phi, phi[perm]).targets, np.argsort(perm))


def test_pointmap_agrees_with_soft_argmax():
    rng = np.random.default_rng(4)
    px, py, c = rng.normal(size=(40, 5)), rng.normal(size=(35, 5)), rng.normal(size=(5, 5))
    t = dm.Tape()
    s = soft_correspondence(t.const(px @ c.T), t.const(py)).value
    assert np.array_equal(fmap_to_pointmap(px, py, c).targets, np.argmax(s, axis=1))


def test_nn_matches_brute_force_500x50():
    rng = np.random.default_rng(5)
    px, py = rng.normal(size=(500, 50)), rng.normal(size=(500, 50))
    brute = np.array([np.argmin(((py - row) ** 2).sum(1)) for row in px])
    assert np.array_equal(nn_correspondence(px, py).targets, brute)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_nn_permutation_equivariant(seed):
    rng = np.random.default_rng(seed)
    px, py = rng.normal(size=(20, 4)), rng.normal(size=(25, 4))
    perm = rng.permutation(25)
    base = nn_correspondence(px, py).targets
    shuffled = nn_correspondence(px, py[perm]).targets
    assert np.array_equal(perm[shuffled], base)
    assert np.array_equal(nn_correspondence(px, px).targets, np.arange(20))
