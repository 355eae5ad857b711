"""Least-absolute-residual fitting by the simplex method.

``minimize_l1_residual`` solves ``min_x ‖Ax − y‖₁`` through the slack
reformulation

    min  Σ (u_i + v_i)
    s.t. A x⁺ − A x⁻ + u − v = y,   x⁺, x⁻, u, v ≥ 0

which has an obvious starting basis (``u_i`` where ``y_i ≥ 0``, ``v_i``
otherwise), so no phase one is needed. ``L1Decoder`` wraps it as a
scikit-learn regressor.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from ._validation import check_matrix, check_vector
from .exceptions import DimensionError, ParameterError, SolverError

_REFACTOR_EVERY = 64


@dataclass
class L1Solution:
    x: np.ndarray
    residual: float
    basis: np.ndarray
    n_pivots: int


def _entering_bland(rc, tol):
    neg = np.flatnonzero(rc < -tol)
    return int(neg[0]) if neg.size else -1


def _entering_dantzig(rc, tol):
    j = int(np.argmin(rc))
    return j if rc[j] < -tol else -1


def _leaving(col, rhs, basis, tol):
    """Minimum-ratio row; ties go to the smallest basic variable index."""
    rows = np.flatnonzero(col > tol)
    if rows.size == 0:
        return -1
    ratios = rhs[rows] / col[rows]
    best = ratios.min()
    tied = rows[ratios <= best + tol * max(1.0, abs(best))]
    return int(tied[np.argmin(basis[tied])])


def minimize_l1_residual(A, y_tilde, *, pivot_rule="dantzig", max_pivots=None,
                         tol=1e-9):
    """Minimize ``‖A x − y_tilde‖₁`` over real ``x``.

    Returns ``(x_hat, residual)``. ``x_hat`` is read off the final basis of
    the slack reformulation, so it is a vertex solution. ``pivot_rule`` is
    ``"bland"`` (smallest-index entering and leaving variables; never cycles)
    or ``"dantzig"`` (most negative reduced cost, switching to Bland after a
    run of degenerate pivots).
    """
    sol = solve_l1(A, y_tilde, pivot_rule=pivot_rule, max_pivots=max_pivots, tol=tol)
    return sol.x, sol.residual


def solve_l1(A, y_tilde, *, pivot_rule="dantzig", max_pivots=None, tol=1e-9,
             perturbation=1e-7):
    """Like :func:`minimize_l1_residual` but returns the full :class:`L1Solution`."""
    A = check_matrix(A)
    k, d = A.shape
    y = check_vector(y_tilde, "y_tilde", length=k)
    if pivot_rule not in ("bland", "dantzig"):
        raise ParameterError(f"unknown pivot rule {pivot_rule!r}")
    if max_pivots is None:
        max_pivots = 50 * (k + 2 * d) + 1000

    # columns: x+ (d) | x- (d) | u (k) | v (k)
    n_cols = 2 * d + 2 * k
    M = np.zeros((k, n_cols))
    M[:, :d] = A
    M[:, d:2 * d] = -A
    M[:, 2 * d:2 * d + k] = np.eye(k)
    M[:, 2 * d + k:] = -np.eye(k)
    b = y.copy()
    flip = b < 0
    M[flip] *= -1.0
    b[flip] *= -1.0
    cost = np.concatenate([np.zeros(2 * d), np.ones(2 * k)])
    basis = np.where(flip, 2 * d + k + np.arange(k), 2 * d + np.arange(k))

    scale = max(1.0, float(np.abs(A).max()), float(np.abs(y).max()))
    ztol = tol * scale

    rc_tol = tol * max(1.0, np.sqrt(k))
    # a tiny fixed positive perturbation of the right-hand side breaks the ties
    # that make exact (noiseless) releases massively degenerate; the final
    # basis is re-solved against the true right-hand side
    b_work = b + perturbation * scale * np.random.default_rng(0).uniform(1.0, 2.0, k)
    T = M.copy()
    rhs = b_work.copy()
    rc = cost - cost[basis] @ T

    degenerate_run = 0
    use_bland = pivot_rule == "bland"
    n_pivots = 0
    while True:
        j = _entering_bland(rc, rc_tol) if use_bland else _entering_dantzig(rc, rc_tol)
        if j < 0:
            break
        if n_pivots >= max_pivots:
            x = _primal_x(basis, rhs, d)
            raise SolverError(f"pivot limit {max_pivots} reached", incumbent=x,
                              objective=float(np.abs(A @ x - y).sum()))
        col = T[:, j].copy()
        r = _leaving(col, rhs, basis, ztol)
        if r < 0:
            # the objective is bounded below, so this is accumulated rounding
            T, rhs, rc = _refactor(M, b_work, cost, basis)
            col = T[:, j].copy()
            r = _leaving(col, rhs, basis, ztol)
            if r < 0:
                rc[j] = 0.0
                continue
        step = rhs[r] / col[r]
        piv = T[r] / col[r]
        T -= np.outer(col, piv)
        T[r] = piv
        rhs -= col * step
        rhs[r] = step
        rc -= rc[j] * piv
        basis[r] = j
        n_pivots += 1

        if pivot_rule == "dantzig":
            degenerate_run = degenerate_run + 1 if step <= ztol else 0
            use_bland = degenerate_run > 25
        if n_pivots % _REFACTOR_EVERY == 0:
            T, rhs, rc = _refactor(M, b_work, cost, basis)
        np.maximum(rhs, 0.0, out=rhs)

    # the basis is optimal for b_work; against the true b it stays dual
    # feasible but may be slightly primal infeasible, which dual simplex fixes
    T, rhs, rc = _refactor(M, b, cost, basis)
    while True:
        r = int(np.argmin(rhs))
        if rhs[r] >= -ztol:
            break
        if n_pivots >= max_pivots:
            raise SolverError(f"pivot limit {max_pivots} reached in cleanup",
                              incumbent=_primal_x(basis, rhs, d))
        cand = np.flatnonzero(T[r] < -tol)
        if cand.size == 0:
            break
        ratios = np.maximum(rc[cand], 0.0) / -T[r, cand]
        j = int(cand[np.argmin(ratios)])
        basis[r] = j
        n_pivots += 1
        T, rhs, rc = _refactor(M, b, cost, basis)
    x = _primal_x(basis, rhs, d)
    residual = float(np.abs(A @ x - y).sum())
    return L1Solution(x=x, residual=residual, basis=basis.copy(), n_pivots=n_pivots)


def _refactor(M, b, cost, basis):
    B = M[:, basis]
    T = np.linalg.solve(B, M)
    rhs = np.linalg.solve(B, b)
    rc = cost - cost[basis] @ T
    return T, rhs, rc


def _primal_x(basis, rhs, d):
    x = np.zeros(d)
    for r, j in enumerate(basis):
        if j < d:
            x[j] += rhs[r]
        elif j < 2 * d:
            x[j - d] -= rhs[r]
    return x


class L1Decoder(RegressorMixin, BaseEstimator):
    """Least-absolute-deviation regression without intercept.

    ``fit(X, y)`` stores ``coef_ = argmin ‖X coef − y‖₁``. With ``X`` a query
    matrix and ``y`` a noisy release this is exactly LP decoding.

    Parameters
    ----------
    pivot_rule : {"dantzig", "bland"}
    max_pivots : int or None
    tol : float
        Reduced-cost and pivot tolerance.
    """

    def __init__(self, pivot_rule="dantzig", max_pivots=None, tol=1e-9):
        self.pivot_rule = pivot_rule
        self.max_pivots = max_pivots
        self.tol = tol

    def fit(self, X, y):
        X, y = validate_data(self, X, y, dtype=np.float64, y_numeric=True)
        if y.ndim != 1:
            raise DimensionError("y must be 1-D")
        sol = solve_l1(X, y, pivot_rule=self.pivot_rule, max_pivots=self.max_pivots,
                       tol=self.tol)
        self.coef_ = sol.x
        self.residual_ = sol.residual
        self.n_pivots_ = sol.n_pivots
        self.basis_ = sol.basis
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return X @ self.coef_
