"""Reconstruction attacks.

* :func:`lp_decode_attack` recovers a database from answers that are
  accurate on most coordinates and arbitrary on the rest, by l1 regression.
* :func:`exhaustive_attack_majority` and :func:`exhaustive_attack_allcoords`
  enumerate every histogram of bounded size over a small universe.
* :func:`attribute_attack` recovers a hidden attribute column from noisy
  ``ℓ``-way marginals.
* :func:`nearest_neighbor_decode` and :func:`epsilon_delta_witness` turn
  reconstruction into evidence against a privacy claim.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import combinations
import math
import time
from typing import Any, Callable, Optional

import numpy as np

from ._validation import check_count, check_rng, check_vector
from .data import AttributeTable
from .exceptions import DimensionError, NotFoundError, ParameterError, ResourceError
from .linalg import hadamard_row_product, smallest_singular_value, subset_norm
from .lp import minimize_l1_residual
from .mechanisms import NoisyRelease, PrivacyParams
from .queries import CountingQuery, MarginalQuery
from .report import jsonable as _jsonable

MAX_CANDIDATES = 10 ** 7


@dataclass
class AttackResult:
    """Outcome of one attack.

    ``success`` is ``l1_error <= bound_used`` when the harness supplied the
    true database, otherwise ``None``. ``certificate`` collects
    attack-specific evidence (proof-chain terms, filter statistics, ...).
    """

    attack: str
    reconstruction: np.ndarray
    l1_error: Optional[float]
    success: Optional[bool]
    bound_used: float
    elapsed: float
    hit_fraction: Optional[float] = None
    certificate: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def to_json(self, include_timing=True):
        out = _jsonable(asdict(self))
        if not include_timing:
            out.pop("elapsed")
        return out


def _finish(attack, recon, truth, bound, t0, **kw):
    recon = np.asarray(recon)
    if truth is None:
        err, ok = None, None
    else:
        err = float(np.abs(recon - np.asarray(truth, dtype=np.float64)).sum())
        ok = bool(err <= bound)
    return AttackResult(attack, recon, err, ok, float(bound), time.perf_counter() - t0, **kw)


@dataclass(frozen=True)
class SectionParams:
    """Euclidean-section constant and smallest singular value of a query matrix."""

    delta_section: float
    sigma_min: float

    def __post_init__(self):
        if not 0 < self.delta_section <= 1:
            raise ParameterError(f"delta_section must lie in (0, 1], got {self.delta_section}")
        if self.sigma_min < 0:
            raise ParameterError("sigma_min must be nonnegative")

    @property
    def gamma_wild(self):
        return self.delta_section ** 2 / 8


def lp_error_bound(alpha, params: SectionParams, k, d):
    """``8α(1 − δ²/8)√(kd) / (δσ)``, the explicit l1 error budget of LP decoding."""
    delta, sigma = params.delta_section, params.sigma_min
    if sigma == 0:
        return math.inf
    return 8 * alpha * (1 - delta ** 2 / 8) * math.sqrt(k * d) / (delta * sigma)


def round_bits(x, threshold=0.5):
    """Round to {0,1}; values exactly at ``threshold`` go to 0."""
    return (np.asarray(x) > threshold).astype(np.int64)


def proof_chain(A, x_true, x_hat, y_tilde, alpha, delta_section):
    """Terms of the LP-decoding correctness argument for one instance.

    With ``z = x_hat − x_true``, ``e = y_tilde − A x_true`` and
    ``S = {i : |e_i| > α}``, optimality of ``x_hat`` forces
    ``‖Az‖₁ − 2‖Az‖_{S,1} ≤ 2‖e‖_{S̄,1} ≤ 2α|S̄|``. ``rhs_stated`` is the
    looser-looking ``2α(1 − δ²/8)k`` used to close the bound.
    """
    A = np.asarray(A, dtype=np.float64)
    k = A.shape[0]
    z = np.asarray(x_hat, dtype=np.float64) - np.asarray(x_true, dtype=np.float64)
    Az = A @ z
    e = np.asarray(y_tilde, dtype=np.float64) - A @ np.asarray(x_true, dtype=np.float64)
    S = np.flatnonzero(np.abs(e) > alpha)
    Sbar = np.flatnonzero(np.abs(e) <= alpha)
    lhs = subset_norm(Az, None, 1) - 2 * subset_norm(Az, S, 1)
    return {
        "lhs": lhs,
        "rhs_noise": 2 * subset_norm(e, Sbar, 1),
        "rhs_count": 2 * alpha * len(Sbar),
        "rhs_stated": 2 * alpha * (1 - delta_section ** 2 / 8) * k,
        "wild_count": int(len(S)),
        "wild_fraction": len(S) / k,
    }


def lp_decode_attack(A, release, params: SectionParams, alpha, *, truth=None,
                     round_to=None, threshold=0.5, pivot_rule="dantzig", atol=1e-6):
    """LP decoding: ``x̃ = argmin ‖A x − ỹ‖₁``.

    ``bound_used`` is :func:`lp_error_bound` plus ``atol`` of numerical slack,
    so exact recovery at ``α = 0`` counts as success.

    ``round_to`` may be ``"bits"`` (threshold rounding) or ``"integers"``; the
    reported ``l1_error`` is for the returned reconstruction, the unrounded
    error is kept in the certificate.
    """
    t0 = time.perf_counter()
    M = A.matrix if isinstance(A, CountingQuery) else np.asarray(A, dtype=np.float64)
    y = release.answers if isinstance(release, NoisyRelease) else check_vector(release, "release")
    k, d = M.shape
    if y.size != k:
        raise DimensionError(f"release has length {y.size}, query arity is {k}")
    if params.sigma_min <= 0:
        raise ParameterError("LP decoding needs sigma_min > 0")
    x_hat, residual = minimize_l1_residual(M, y, pivot_rule=pivot_rule)
    bound = lp_error_bound(alpha, params, k, d) + atol
    if round_to == "bits":
        recon = round_bits(x_hat, threshold)
    elif round_to == "integers":
        recon = np.rint(x_hat).astype(np.int64)
    elif round_to is None:
        recon = x_hat
    else:
        raise ParameterError(f"unknown rounding {round_to!r}")
    cert = {"residual": residual, "x_hat": x_hat,
            "delta_section": params.delta_section, "sigma_min": params.sigma_min,
            "gamma_wild": params.gamma_wild, "alpha": alpha}
    warn = []
    if truth is not None:
        truth = np.asarray(truth, dtype=np.float64)
        cert["raw_l1_error"] = float(np.abs(x_hat - truth).sum())
        chain = proof_chain(M, truth, x_hat, y, alpha, params.delta_section)
        cert["proof_chain"] = chain
        if chain["wild_fraction"] > params.gamma_wild:
            warn.append("wild fraction exceeds delta^2/8; the error bound does not apply")
    hit = float(np.mean(np.abs(M @ x_hat - y) <= alpha)) if k else None
    return _finish("lp_decode", recon, truth, bound, t0, hit_fraction=hit,
                   certificate=cert, warnings=warn)


def count_histograms(d, n):
    """Number of ``x ∈ (Z⁺)^d`` with ``‖x‖₁ ≤ n``, i.e. ``C(n + d, d)``."""
    return math.comb(n + d, d)


def _compositions(total, d):
    """All ``x ∈ (Z⁺)^d`` summing to ``total``, lexicographically ascending."""
    if d == 1:
        return np.array([[total]], dtype=np.int64)
    bars = np.array(list(combinations(range(total + d - 1), d - 1)), dtype=np.int64)
    bars = bars.reshape(-1, d - 1)
    m = len(bars)
    edges = np.hstack([np.full((m, 1), -1), bars, np.full((m, 1), total + d - 1)])
    return np.diff(edges, axis=1) - 1


def enumerate_histograms(d, n):
    """Yield blocks of histograms of size ``n, n−1, …, 0``; each block is lexicographic.

    Checking the largest databases first means a database of size exactly
    ``n`` is preferred over its sub-databases when both pass a filter.
    """
    for total in range(n, -1, -1):
        yield _compositions(total, d)


def _evaluate(F, X):
    if isinstance(F, CountingQuery):
        return F(X)
    out = F(X)
    out = np.asarray(out, dtype=np.float64)
    if out.ndim == 2 and out.shape[0] == len(X):
        return out
    return np.array([np.asarray(F(x), dtype=np.float64) for x in X])


def _guard(d, n, max_candidates):
    est = count_histograms(d, n)
    if est > max_candidates:
        raise ResourceError(f"enumeration needs {est} candidates (limit {max_candidates})",
                            estimate=est, limit=max_candidates)
    return est


def filter_candidates(F, release, d, n, predicate, *, max_candidates=MAX_CANDIDATES,
                      first_only=True):
    """Enumerate histograms in attack order and keep those whose answers pass ``predicate``.

    ``predicate`` maps a ``(batch, k)`` array of absolute answer deviations to a
    boolean mask. Returns a list of ``(order_index, candidate)`` pairs.
    """
    y = release.answers if isinstance(release, NoisyRelease) else check_vector(release, "release")
    _guard(d, n, max_candidates)
    found, offset = [], 0
    for block in enumerate_histograms(d, n):
        dev = np.abs(_evaluate(F, block) - y)
        idx = np.flatnonzero(predicate(dev))
        for i in idx:
            found.append((offset + int(i), block[i]))
            if first_only:
                return found
        offset += len(block)
    return found


def _majority_predicate(tol, eta):
    need = 0.5 + eta / 4
    return lambda dev: np.mean(dev <= tol, axis=1) >= need


def exhaustive_attack_majority(F, release, d, n, tol, eta, *, truth=None,
                               error_budget=None, max_candidates=MAX_CANDIDATES):
    """Return the first histogram of size ≤ ``n`` matching the release on a ``1/2 + η/4`` fraction.

    A coordinate matches when ``|F(x′)_i − ỹ_i| ≤ tol``. ``error_budget``
    (default ``n/10``) is the l1 distance counted as success.
    """
    t0 = time.perf_counter()
    d, n = check_count(d, "d"), check_count(n, "n", minimum=0)
    budget = n / 10 if error_budget is None else error_budget
    found = filter_candidates(F, release, d, n, _majority_predicate(tol, eta),
                              max_candidates=max_candidates)
    if not found:
        raise NotFoundError("no candidate passes the majority filter; the noise hypothesis fails")
    order, x = found[0]
    y = release.answers if isinstance(release, NoisyRelease) else np.asarray(release)
    hit = float(np.mean(np.abs(_evaluate(F, x[None, :])[0] - y) <= tol))
    return _finish("exhaustive_majority", x, truth, budget, t0, hit_fraction=hit,
                   certificate={"order_index": order, "tol": tol, "eta": eta,
                                "required_fraction": 0.5 + eta / 4,
                                "candidates": count_histograms(d, n)})


def exhaustive_attack_allcoords(F, release, d, n, theta, *, truth=None, error_budget=None,
                                max_candidates=MAX_CANDIDATES):
    """Return the first histogram of size ≤ ``n`` within ``theta`` of the release on every coordinate."""
    t0 = time.perf_counter()
    d, n = check_count(d, "d"), check_count(n, "n", minimum=0)
    budget = n / 10 if error_budget is None else error_budget
    found = filter_candidates(F, release, d, n, lambda dev: np.all(dev <= theta, axis=1),
                              max_candidates=max_candidates)
    if not found:
        raise NotFoundError("no candidate is within theta on every coordinate")
    order, x = found[0]
    warn = ["infinite threshold: every candidate passes"] if math.isinf(theta) else []
    return _finish("exhaustive_allcoords", x, truth, budget, t0, hit_fraction=1.0,
                   certificate={"order_index": order, "theta": theta,
                                "candidates": count_histograms(d, n),
                                "degenerate": math.isinf(theta)},
                   warnings=warn)


def literal_matrix(known):
    """Indicator matrix of the literals of the known attributes.

    Row ``2j`` is ``[Y[:, j] == −1]`` and row ``2j+1`` is ``[Y[:, j] == +1]``;
    columns are individuals.
    """
    Y = np.asarray(known)
    rows = np.empty((2 * Y.shape[1], Y.shape[0]))
    rows[0::2] = (Y == -1).T
    rows[1::2] = (Y == 1).T
    return rows


def attribute_design(known, ell, hidden_index):
    """Linear map from the hidden column to the marginals that fix it to +1.

    Returns ``(A, rows)`` where ``A`` is the Hadamard product of ``ℓ−1``
    literal matrices restricted to tuples over increasing attributes, and
    ``rows`` are the matching positions in the full marginal release over
    ``d' = known.shape[1] + 1`` attributes.
    """
    Y = np.asarray(known)
    n, m = Y.shape
    d_prime = m + 1
    q = MarginalQuery(d_prime, ell)
    lit = literal_matrix(Y)
    H = hadamard_row_product([lit] * (ell - 1))
    # original attribute index of known column j
    orig = [j if j < hidden_index else j + 1 for j in range(m)]
    position = {}
    conj = q.conjunctions()
    for r, c in enumerate(conj):
        if c[hidden_index] == 1:
            position[tuple(c)] = r
    n_lit = 2 * m
    keep, rows = [], []
    for t in range(n_lit ** (ell - 1)):
        digits = []
        rest = t
        for _ in range(ell - 1):
            digits.append(rest % n_lit)
            rest //= n_lit
        digits = digits[::-1]
        attrs = [g // 2 for g in digits]
        if any(a >= b for a, b in zip(attrs, attrs[1:])):
            continue
        c = np.zeros(d_prime, dtype=np.int64)
        c[hidden_index] = 1
        for g in digits:
            c[orig[g // 2]] = 1 if g % 2 else -1
        keep.append(t)
        rows.append(position[tuple(c)])
    return H[keep], np.array(rows, dtype=np.int64)


def best_bit_vector(A, y):
    """Exhaustive ``argmin_b ‖A b − y‖₁`` over ``b ∈ {0,1}^n``; ties go to the first in binary order."""
    n = A.shape[1]
    codes = np.arange(2 ** n)[:, None] >> np.arange(n - 1, -1, -1)
    B = (codes & 1).astype(np.float64)
    resid = np.abs(B @ A.T - y).sum(axis=1)
    return B[int(np.argmin(resid))].astype(np.int64), float(resid.min())


def attribute_attack(known, marginal_release, ell, params=None, *, hidden_index=None,
                     truth=None, alpha=None, error_budget=None, threshold=0.5,
                     section_samples=2000, seed=0, exact_search_limit=16):
    """Recover a hidden 0/1 attribute column from released ``ℓ``-way marginals.

    ``known`` is either an :class:`AttributeTable` with a designated hidden
    column (whose values are then ignored) or the ``n × (d'−1)`` array of
    known columns together with ``hidden_index``. The release must cover all
    ``2^ℓ·C(d', ℓ)`` marginals in :class:`MarginalQuery` order. When
    ``params`` is omitted the section constant and smallest singular value
    of the design are measured. ``error_budget`` defaults to ``n/10`` wrong bits.
    """
    t0 = time.perf_counter()
    if isinstance(known, AttributeTable):
        if known.hidden_column_index is None:
            raise ParameterError("table has no hidden column")
        hidden_index = known.hidden_column_index
        Y, _ = known.known()
    else:
        Y = np.asarray(known)
        if hidden_index is None:
            raise ParameterError("hidden_index is required with a bare array")
    n, m = Y.shape
    ell = check_count(ell, "ell", minimum=2)
    q = MarginalQuery(m + 1, ell)
    y = marginal_release.answers if isinstance(marginal_release, NoisyRelease) \
        else check_vector(marginal_release, "marginal_release")
    if y.size != q.k:
        raise DimensionError(f"release has {y.size} marginals, expected {q.k}")
    A, rows = attribute_design(Y, ell, hidden_index)
    warn = []
    if A.shape[0] < n:
        warn.append(f"under-determined: {A.shape[0]} equations for {n} unknowns")
    if params is None and A.shape[0] >= n:
        from .analysis import estimate_section_constant
        sigma = smallest_singular_value(A)
        est = estimate_section_constant(A, section_samples, seed)
        params = SectionParams(max(est.delta_hat, 1e-12), sigma)
    y_sub = y[rows]
    x_hat, residual = minimize_l1_residual(A, y_sub)
    bits = round_bits(x_hat, threshold)
    rounded_residual = float(np.abs(A @ bits - y_sub).sum())
    polished = False
    if rounded_residual > residual + 1e-7 * max(1.0, residual) and n <= exact_search_limit:
        bits, rounded_residual = best_bit_vector(A, y_sub)
        polished = True
    budget = n / 10 if error_budget is None else error_budget
    cert = {"rows": int(A.shape[0]), "residual": residual, "x_hat": x_hat,
            "rounded_residual": rounded_residual, "exact_search": polished}
    if params is not None:
        cert.update(delta_section=params.delta_section, sigma_min=params.sigma_min)
        if alpha is not None:
            cert["lp_error_bound"] = lp_error_bound(alpha, params, A.shape[0], n)
    hit = float(np.mean(np.abs(A @ x_hat - y_sub) <= alpha)) if alpha is not None else None
    return _finish("attribute", bits, truth, budget, t0, hit_fraction=hit,
                   certificate=cert, warnings=warn)


def nearest_neighbor_decode(images, y):
    """Index of the image closest to ``y`` in l2; ties go to the lowest index."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 2 or len(images) == 0:
        raise ParameterError("images must be a non-empty 2-D array")
    y = check_vector(y, "y", length=images.shape[1])
    diff = images - y
    return int(np.argmin(np.einsum("ij,ij->i", diff, diff)))


@dataclass
class WitnessReport:
    """Empirical evidence that a mechanism is not (ε, δ)-DP.

    ``rate`` is the fraction of trials where the accuracy hypothesis held
    *and* the attack recovered at least ``(1 − √δ)n`` bits. The witness fires
    when ``rate ≥ 3√δ``.
    """

    rate: float
    threshold_rate: float
    fires: bool
    hypothesis_rate: float
    required_bits: float
    within: float
    gamma: float
    eta: float
    n: int
    k: int
    trials: list
    seed: Any = None

    def to_json(self):
        return _jsonable(asdict(self))


def _witness_trial(mechanism, A, n, required_bits, within, need, threshold, seq):
    rng = np.random.default_rng(seq)
    x = rng.integers(0, 2, size=n)
    truth = A.matrix @ x
    out = mechanism(truth, rng)
    answers = out.answers if isinstance(out, NoisyRelease) else np.asarray(out, dtype=np.float64)
    frac = float(np.mean(np.abs(answers - truth) <= within))
    hypothesis = frac >= need
    x_hat, _ = minimize_l1_residual(A.matrix, answers)
    recovered = int(np.sum(round_bits(x_hat, threshold) == x))
    return {"within_fraction": frac, "hypothesis_ok": bool(hypothesis),
            "bits_recovered": recovered,
            "event": bool(hypothesis and recovered >= required_bits)}


def epsilon_delta_witness(mechanism: Callable, F: Optional[CountingQuery], n,
                          params: PrivacyParams, trials=50, seed=0, *, gamma=0.05,
                          eta=1.0, k_factor=8, threshold=0.5, n_jobs=1):
    """Run LP decoding against ``mechanism`` on uniform bit databases.

    ``mechanism(true_answers, rng)`` returns a :class:`NoisyRelease` or an
    array. ``F`` defaults to a random sign query with ``k_factor·n`` rows.
    The accuracy hypothesis is that at least ``1/2 + γ`` of the answers are
    within ``η√n``. Trials are seeded from ``SeedSequence(seed)`` and may run
    on ``n_jobs`` threads; records are ordered by trial index either way.
    """
    n = check_count(n, "n")
    trials = check_count(trials, "trials")
    root = np.random.SeedSequence(seed)
    q_seq, *trial_seqs = root.spawn(trials + 1)
    A = F if F is not None else _sign_query(n, k_factor * n, q_seq)
    if A.d != n:
        raise DimensionError(f"query has {A.d} columns for n={n}")
    required = (1 - math.sqrt(params.delta)) * n
    within = eta * math.sqrt(n)
    need = 0.5 + gamma

    def run(i):
        rec = _witness_trial(mechanism, A, n, required, within, need, threshold, trial_seqs[i])
        rec["trial"] = i
        return rec

    if n_jobs == 1:
        records = [run(i) for i in range(trials)]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            records = list(pool.map(run, range(trials)))
    records.sort(key=lambda r: r["trial"])
    rate = sum(r["event"] for r in records) / trials
    thresh = 3 * math.sqrt(params.delta)
    return WitnessReport(rate=rate, threshold_rate=thresh, fires=bool(rate >= thresh),
                         hypothesis_rate=sum(r["hypothesis_ok"] for r in records) / trials,
                         required_bits=required, within=within, gamma=gamma, eta=eta,
                         n=n, k=A.k, trials=records,
                         seed=seed if isinstance(seed, (int, np.integer)) else None)


def _sign_query(d, k, seq):
    from .queries import random_sign_query
    return random_sign_query(d, k, np.random.default_rng(seq))
