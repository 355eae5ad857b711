import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import linprog
from sklearn.utils.estimator_checks import check_get_params_invariance

from dpal.exceptions import SolverError
from dpal.lp import L1Decoder, minimize_l1_residual, solve_l1


def highs_l1(A, y):
    k, d = A.shape
    c = np.r_[np.zeros(d), np.ones(k)]
    A_ub = np.block([[A, -np.eye(k)], [-A, -np.eye(k)]])
    res = linprog(c, A_ub=A_ub, b_ub=np.r_[y, -y], bounds=[(None, None)] * d + [(0, None)] * k,
                  method="highs")
    return res.fun


def test_identity():
    x, r = minimize_l1_residual(np.eye(2), [1, 2])
    np.testing.assert_allclose(x, [1, 2])
    assert r == 0


def test_weighted_median():
    x, r = minimize_l1_residual(np.ones((3, 1)), [0, 0, 10])
    grid = np.arange(-20, 20, 1e-3)
    best = np.abs(grid[:, None] - np.array([0, 0, 10])).sum(axis=1).min()
    assert r == pytest.approx(best, abs=1e-7)
    assert x[0] == pytest.approx(0, abs=1e-9)


def test_vertex_solution_on_flat_optimum():
    x, r = minimize_l1_residual(np.ones((2, 1)), [3, 5])
    assert r == pytest.approx(2)
    assert min(abs(x[0] - 3), abs(x[0] - 5)) < 1e-9


@pytest.mark.parametrize("rule", ["dantzig", "bland"])
@pytest.mark.parametrize("seed", range(15))
def test_matches_highs(rule, seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 30))
    d = int(rng.integers(1, k + 1))
    A = rng.choice([-1.0, 0.0, 1.0], size=(k, d))
    y = rng.integers(-5, 6, size=k).astype(float)
    _, r = minimize_l1_residual(A, y, pivot_rule=rule)
    assert r == pytest.approx(highs_l1(A, y), abs=1e-7)


small = st.integers(1, 6).flatmap(lambda d: st.tuples(
    arrays(np.float64, (d + 3, d), elements=st.integers(-2, 2).map(float)),
    arrays(np.float64, d + 3, elements=st.floats(-10, 10, allow_nan=False)),
    arrays(np.float64, d, elements=st.floats(-10, 10, allow_nan=False))))


@pytest.mark.property
@given(small)
def test_probe_dominance(case):
    A, y, probe = case
    _, r = minimize_l1_residual(A, y)
    assert r <= np.abs(A @ probe - y).sum() + 1e-7


@pytest.mark.property
@given(small, st.floats(0.1, 100))
def test_joint_scaling(case, c):
    A, y, _ = case
    x1, r1 = minimize_l1_residual(A, y)
    x2, r2 = minimize_l1_residual(c * A, c * y)
    assert r2 == pytest.approx(c * r1, rel=1e-6, abs=1e-6)
    # a flat optimum may be reached at a different vertex, so compare objective values
    assert np.abs(A @ x2 - y).sum() == pytest.approx(r1, rel=1e-6, abs=1e-6)


@pytest.mark.property
@settings(max_examples=1000)
@given(st.integers(1, 6), st.integers(0, 2 ** 31 - 1))
def test_exact_data_is_fitted(d, seed):
    rng = np.random.default_rng(seed)
    A = rng.choice([-1.0, 1.0], size=(3 * d, d))
    if np.linalg.matrix_rank(A) < d:
        return
    x0 = rng.integers(0, 5, size=d).astype(float)
    x, r = minimize_l1_residual(A, A @ x0)
    assert np.max(np.abs(A @ x - A @ x0)) <= 1e-6


def test_pivot_limit_raises_with_incumbent():
    rng = np.random.default_rng(0)
    A = rng.choice([-1.0, 1.0], size=(40, 10))
    y = rng.normal(size=40)
    with pytest.raises(SolverError) as e:
        solve_l1(A, y, max_pivots=2)
    assert e.value.incumbent.shape == (10,)
    assert e.value.objective >= 0


def test_noiseless_degenerate_instance_is_fast():
    rng = np.random.default_rng(1)
    A = rng.choice([-1.0, 1.0], size=(192, 24))
    x0 = rng.integers(0, 2, size=24)
    sol = solve_l1(A, A @ x0)
    assert sol.n_pivots < 2000
    assert np.abs(sol.x - x0).sum() < 1e-6


def test_l1_decoder_estimator():
    rng = np.random.default_rng(2)
    X = rng.choice([-1.0, 1.0], size=(50, 5))
    coef = rng.normal(size=5)
    y = X @ coef
    y[:3] += 100
    est = L1Decoder().fit(X, y)
    np.testing.assert_allclose(est.coef_, coef, atol=1e-6)
    np.testing.assert_allclose(est.predict(X[:4]), X[:4] @ coef, atol=1e-6)
    assert est.get_params() == {"pivot_rule": "dantzig", "max_pivots": None, "tol": 1e-9}
    check_get_params_invariance("L1Decoder", est)
