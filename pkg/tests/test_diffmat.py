import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from symmatch import diffmat as dm
from symmatch.errors import ContractError, DimensionError, NonFiniteError, SingularityError
from symmatch.gradcheck import OP_TOL, check, numeric_grad, op_checks, rel_error


def leaf(v):
    return dm.Tape().leaf(np.asarray(v, dtype=float))


def test_matmul_identity():
    m = np.arange(6.0).reshape(3, 2)
    t = dm.Tape()
    assert np.array_equal(dm.matmul(t.leaf(np.eye(3)), t.leaf(m)).value, m)


def test_frobenius_345():
    assert dm.frobenius_norm(leaf([[3.0, 4.0]])).value[0, 0] == 5.0


def test_pairwise_distance_345_and_zero_diagonal():
    t = dm.Tape()
    assert dm.pairwise_distance(t.leaf([[0.0, 0.0]]), t.leaf([[3.0, 4.0]])).value[0, 0] == pytest.approx(5.0, abs=1e-15)
    a = np.random.default_rng(0).normal(size=(6, 3))
    d = dm.pairwise_distance(t.leaf(a), t.leaf(a)).value
    assert np.all(np.diag(d) == 0.0)


def test_pairwise_distance_gradient_finite_at_coincident_rows():
    t = dm.Tape()
    a = t.leaf(np.ones((2, 3)))
    g = dm.backward(dm.sum_all(dm.pairwise_distance(a, a)))[a]
    assert np.all(np.isfinite(g))


def test_softmax_uniform_and_direct_value():
    s = dm.row_softmax_neg(leaf([[5.0, 5.0, 5.0]])).value
    assert np.allclose(s, 1.0 / 3.0, atol=1e-15)
    s = dm.row_softmax_neg(leaf([[0.0, 10.0]])).value
    e = np.exp(-10.0)
    assert s[0, 0] == pytest.approx(1.0 / (1.0 + e), abs=1e-12)
    assert s[0, 1] == pytest.approx(e / (1.0 + e), abs=1e-12)
    assert s[0, 0] == pytest.approx(0.9999546, abs=1e-7)
    assert s[0, 1] == pytest.approx(4.5398e-5, rel=1e-4)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 8)), elements=st.floats(-50, 50)))
def test_softmax_rows_normalized_and_positive(d):
    s = dm.row_softmax_neg(leaf(d)).value
    assert np.allclose(s.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(s > 0) and np.all(s <= 1)


def test_softmax_strictly_inside_unit_interval_for_moderate_input():
    d = np.random.default_rng(1).uniform(0, 5, size=(5, 7))
    s = dm.row_softmax_neg(leaf(d)).value
    assert np.all((s > 0) & (s < 1))


def test_ridge_solve_identity_and_exact():
    t = dm.Tape()
    b = np.random.default_rng(2).normal(size=(4, 3))
    assert np.allclose(dm.ridge_solve(t.leaf(np.eye(4)), t.leaf(b), 0.0).value, b, atol=1e-14)
    x = dm.ridge_solve(t.leaf([[1.0, 0.0], [0.0, 2.0]]), t.leaf([[1.0], [2.0]]), 0.0).value
    assert np.allclose(x, [[1.0], [1.0]], atol=1e-14)


def test_ridge_solve_matches_normal_equations_oracle():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=(30, 10)), rng.normal(size=(30, 4))
    t = dm.Tape()
    got = dm.ridge_solve(t.leaf(a), t.leaf(b), 1e-6).value
    oracle = np.linalg.solve(a.T @ a + 1e-6 * np.eye(10), a.T @ b)
    assert np.max(np.abs(got - oracle)) <= 1e-8


def test_ridge_solve_square_inverse():
    rng = np.random.default_rng(4)
    a = rng.normal(size=(6, 6)) + 3 * np.eye(6)
    b = rng.normal(size=(6, 2))
    t = dm.Tape()
    got = dm.ridge_solve(t.leaf(a), t.leaf(b), 0.0).value
    assert np.max(np.abs(got - np.linalg.solve(a, b))) <= 1e-10


def test_ridge_solve_singular_raises():
    t = dm.Tape()
    with pytest.raises(SingularityError):
        dm.ridge_solve(t.leaf(np.zeros((5, 3))), t.leaf(np.ones((5, 1))), 0.0)


def test_backward_sum_all_is_ones_and_absent_leaf_zero():
    t = dm.Tape()
    a = t.leaf(np.random.default_rng(5).normal(size=(3, 4)))
    other = t.leaf(np.ones((2, 2)))
    g = dm.backward(dm.sum_all(a))
    assert np.array_equal(g[a], np.ones((3, 4)))
    assert np.array_equal(g[other], np.zeros((2, 2)))


def test_backward_requires_scalar_root():
    with pytest.raises(ContractError):
        dm.backward(leaf(np.ones((2, 2))))


def test_shape_errors():
    t = dm.Tape()
    with pytest.raises(DimensionError):
        dm.matmul(t.leaf(np.ones((2, 3))), t.leaf(np.ones((2, 3))))
    with pytest.raises(DimensionError):
        dm.pairwise_distance(t.leaf(np.ones((2, 3))), t.leaf(np.ones((2, 4))))
    with pytest.raises(IndexError):
        dm.gather_rows(t.leaf(np.ones((3, 2))), [0, 3])


def test_non_finite_is_an_error():
    t = dm.Tape()
    with pytest.raises(NonFiniteError):
        t.leaf([[np.nan]])
    with pytest.raises(NonFiniteError), np.errstate(over="ignore"):
        dm.scale(t.leaf([[1e308]]), 1e10)


def test_gather_rows_scatters_gradient():
    t = dm.Tape()
    a = t.leaf(np.zeros((4, 2)))
    g = dm.backward(dm.sum_all(dm.gather_rows(a, [1, 1, 3])))[a]
    assert np.array_equal(g, [[0, 0], [2, 2], [0, 0], [1, 1]])


def test_col_max_ties_route_to_lowest_row():
    t = dm.Tape()
    a = t.leaf([[1.0, 0.0], [1.0, 2.0]])
    g = dm.backward(dm.sum_all(dm.col_max(a)))[a]
    assert np.array_equal(g, [[1, 0], [0, 1]])


def test_frobenius_gradient_matches_finite_differences():
    rng = np.random.default_rng(6)
    r = check("fro", lambda v: dm.frobenius_norm(dm.matmul(v[0], v[1])), [rng.uniform(-1, 1, (4, 3)), rng.uniform(-1, 1, (3, 2))])
    assert r.rel_err < 1e-4


def test_every_op_passes_finite_differences():
    for r in op_checks(np.random.default_rng(7)):
        assert r.rel_err < OP_TOL, r.name


def test_numeric_grad_of_quadratic():
    x = np.array([[1.0, -2.0, 0.5]])
    g = numeric_grad(lambda v: float(np.sum(v[0] ** 2)), [x], 0)
    assert rel_error(g, 2 * x) < 1e-9


def test_tape_replay_bitwise_deterministic():
    rng = np.random.default_rng(8)
    a, b = rng.normal(size=(20, 5)), rng.normal(size=(20, 3))

    def run():
        t = dm.Tape()
        la, lb = t.leaf(a), t.leaf(b)
        x = dm.ridge_solve(la, lb)
        s = dm.row_softmax_neg(dm.pairwise_distance(dm.matmul(la, x), lb))
        g = dm.backward(dm.sum_squares(s))
        return s.value, g[la], g[lb]

    for u, v in zip(run(), run()):
        assert np.array_equal(u, v)


def test_operator_overloads():
    t = dm.Tape()
    a, b = t.leaf([[1.0, 2.0]]), t.leaf([[3.0, 4.0]])
    assert np.array_equal((a + b).value, [[4, 6]])
    assert np.array_equal((a - b).value, [[-2, -2]])
    assert np.array_equal((a * b).value, [[3, 8]])
    assert np.array_equal((a @ b.T).value, [[11]])


def test_check_skips_coordinates_straddling_a_kink():
    # relu input at 1e-6 flips sign under a 1e-5 step
    r = check("kink", lambda v: dm.sum_all(dm.relu(v[0])), [np.array([[1e-6, 0.5]])])
    assert r.skipped == 1 and r.checked == 1 and r.passed


def test_check_detects_a_wrong_backward_rule():
    def bad_square(a):
        return dm._emit("bad", a.value**2, (a,), lambda g: (g * a.value,))  # missing factor 2

    r = check("bad", lambda v: dm.sum_all(bad_square(v[0])), [np.random.default_rng(0).uniform(-1, 1, (3, 3))])
    assert not r.passed
