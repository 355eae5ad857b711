"""Monte Carlo validators for the quantitative facts the attacks rely on.

All validators take a seed, record it, and compare empirical frequencies to
a theoretical bound with a three-sigma binomial tolerance.
"""

from dataclasses import asdict, dataclass, field
import math
from typing import Any, Optional

import numpy as np

from ._validation import check_count, check_matrix, check_positive, check_rng, check_vector
from .attacks import nearest_neighbor_decode
from .data import greedy_binary_code, DatabaseFamily
from .exceptions import ParameterError
from .linalg import hadamard_row_product, smallest_singular_value
from .mechanisms import PrivacyParams, gaussian_sigma, laplace_scale
from .queries import random_lipschitz_query


def _seed_value(seed):
    return int(seed) if isinstance(seed, (int, np.integer)) else None


@dataclass
class TailTestReport:
    """Empirical tail probability against a bound.

    ``direction`` is ``"lower"`` when the bound is a lower bound on the
    probability and ``"upper"`` otherwise. ``samples`` holds the per-trial
    statistic for CSV export and is not part of the JSON form.
    """

    empirical_prob: float
    theoretical_bound: float
    trials: int
    direction: str
    passed: bool
    tolerance: float
    exceedances: int
    threshold: float
    seed: Any = None
    samples: Optional[np.ndarray] = field(default=None, repr=False)

    def to_json(self):
        out = asdict(self)
        out.pop("samples")
        out["pass"] = out.pop("passed")
        return out


def binomial_tolerance(p, trials, sigmas=3.0):
    """``sigmas`` standard deviations of an empirical frequency with mean ``p``."""
    return sigmas * math.sqrt(max(p * (1 - p), 0.0) / trials)


def tail_verdict(empirical, bound, trials, direction):
    tol = binomial_tolerance(min(max(bound, 0.0), 1.0), trials)
    if direction == "lower":
        return empirical >= bound - tol, tol
    if direction == "upper":
        return empirical <= bound + tol, tol
    raise ParameterError(f"direction must be 'lower' or 'upper', got {direction!r}")


@dataclass
class SectionEstimate:
    """Sampled estimate of the Euclidean-section constant of ``range(A)``.

    Sampling can only find directions with a small ratio, so ``delta_hat``
    is an upper estimate of the true constant.
    """

    delta_hat: float
    samples: int
    min_witness: np.ndarray
    seed: Any = None

    def to_json(self):
        return {"delta_hat": self.delta_hat, "samples": self.samples,
                "min_witness": self.min_witness.tolist(), "seed": self.seed,
                "kind": "upper estimate"}


def section_ratios(A, Z):
    """``‖Az‖₁ / (√k‖Az‖₂)`` for each row ``z`` of ``Z``; 0 where ``Az = 0``."""
    # elementwise reduction rather than BLAS so a row's ratio does not depend
    # on how many other rows share the batch
    Z = np.atleast_2d(Z)
    AZ = np.concatenate([(Z[i:i + 256, None, :] * A[None]).sum(axis=2)
                         for i in range(0, len(Z), 256)]) if len(Z) else np.zeros((0, A.shape[0]))
    k = A.shape[0]
    l2 = np.linalg.norm(AZ, axis=1)
    l1 = np.abs(AZ).sum(axis=1)
    tiny = np.finfo(float).eps * max(1.0, float(np.abs(A).max())) * math.sqrt(A.size)
    out = np.zeros(len(Z))
    ok = l2 > tiny * np.linalg.norm(Z, axis=1)
    out[ok] = l1[ok] / (math.sqrt(k) * l2[ok])
    return np.minimum(out, 1.0)


def estimate_section_constant(A, samples=1000, seed=0):
    """Minimum over ``samples`` Gaussian directions ``z`` of ``‖Az‖₁/(√k‖Az‖₂)``.

    Directions are drawn sequentially from one stream, so a larger
    ``samples`` with the same seed scans a superset and can only lower the
    estimate. A direction with ``Az = 0`` gives ``delta_hat = 0``.
    """
    A = check_matrix(A)
    samples = check_count(samples, "samples")
    rng = check_rng(seed)
    Z = rng.standard_normal((samples, A.shape[1]))
    ratios = section_ratios(A, Z)
    i = int(np.argmin(ratios))
    z = Z[i] / np.linalg.norm(Z[i])
    return SectionEstimate(float(ratios[i]), samples, z, _seed_value(seed))


def section_claim_check(A, delta_hat, delta_prime, samples=1000, seed=0):
    """Worst slack of ``‖x‖₁ − 2‖x‖_{S,1} ≥ (δ̂ − 2√δ′)√k‖x‖₂`` over sampled ``x ∈ range(A)``.

    ``S`` is the ``⌊δ′k⌋`` largest-magnitude coordinates of ``x``. A
    nonnegative return value means the inequality held on every sample.
    """
    A = check_matrix(A)
    k = A.shape[0]
    rng = check_rng(seed)
    X = rng.standard_normal((samples, A.shape[1])) @ A.T
    size = math.floor(delta_prime * k)
    mags = np.sort(np.abs(X), axis=1)[:, ::-1]
    lhs = mags.sum(axis=1) - 2 * mags[:, :size].sum(axis=1)
    rhs = (delta_hat - 2 * math.sqrt(delta_prime)) * math.sqrt(k) * np.linalg.norm(X, axis=1)
    return float(np.min(lhs - rhs))


def hadamard_sigma_scaling(d_prime_list, ell, n_ratio=0.5, trials=20, seed=0):
    """Smallest singular value of Hadamard products of random 0/1 matrices.

    For each ``d'`` draws ``trials`` products of ``ℓ−1`` independent
    ``d' × n`` Bernoulli(1/2) matrices with ``n = round(n_ratio·d')`` and
    records ``σ_min / √(d'^{ℓ−1})``. ``trend_ok`` holds when no point's
    median falls below half of the first point's median.
    """
    ell = check_count(ell, "ell")
    if ell < 2:
        raise ParameterError("ell must be at least 2; with ell=1 there is no product")
    trials = check_count(trials, "trials")
    root = np.random.SeedSequence(seed)
    points, records = [], []
    for dp, seq in zip(d_prime_list, root.spawn(len(d_prime_list))):
        dp = check_count(dp, "d_prime")
        n = max(1, round(n_ratio * dp))
        rows = dp ** (ell - 1)
        if rows < n:
            raise ParameterError(f"d'^(ell-1) = {rows} < n = {n}")
        ratios = []
        for t, s in enumerate(seq.spawn(trials)):
            rng = np.random.default_rng(s)
            factors = [rng.integers(0, 2, size=(dp, n)).astype(np.float64)
                       for _ in range(ell - 1)]
            H = hadamard_row_product(factors)
            r = smallest_singular_value(H) / math.sqrt(rows)
            ratios.append(r)
            records.append({"d_prime": dp, "n": n, "trial": t, "ratio": r})
        points.append({"d_prime": dp, "n": n, "median": float(np.median(ratios)),
                       "min": float(np.min(ratios)), "ratios": ratios})
    medians = [p["median"] for p in points]
    trend_ok = bool(min(medians) >= 0.5 * medians[0]) if medians else True
    all_positive = all(p["min"] > 0 for p in points)
    return {"ell": ell, "n_ratio": n_ratio, "trials": trials, "seed": _seed_value(seed),
            "points": points, "trend_ok": trend_ok, "all_positive": all_positive,
            "records": records}


def rademacher_deviation_test(a, theta, trials=10000, seed=0, bound=None, batch=20000):
    """Empirical ``Pr[|Σ aᵢxᵢ| > θ]`` for i.i.d. uniform ``±1`` signs ``x``.

    Compared from below with ``exp(−2dθ²/n²)`` where ``n = Σaᵢ``, or with
    ``bound`` when given (e.g. a corollary's constant).
    """
    a = check_vector(a, "a")
    if np.any(a < 0):
        raise ParameterError("weights must be nonnegative")
    n = float(a.sum())
    if not 0 <= theta <= n / 2:
        raise ParameterError(f"theta must lie in [0, n/2] = [0, {n / 2}], got {theta}")
    trials = check_count(trials, "trials")
    d = a.size
    if bound is None:
        bound = math.exp(-2 * d * theta ** 2 / n ** 2)
    rng = check_rng(seed)
    sums = np.empty(trials)
    for start in range(0, trials, batch):
        m = min(batch, trials - start)
        x = rng.integers(0, 2, size=(m, d), dtype=np.int8) * 2 - 1
        sums[start:start + m] = x @ a
    hits = np.abs(sums) > theta
    emp = float(hits.mean())
    ok, tol = tail_verdict(emp, bound, trials, "lower")
    return TailTestReport(emp, float(bound), trials, "lower", bool(ok), tol,
                          int(hits.sum()), float(theta), _seed_value(seed), sums)


def chi_square_tail_test(k, sigma, xi, trials=10000, seed=0, batch=20000):
    """Empirical ``Pr[Σ Yᵢ² > 2(1+ξ)kσ²]`` for ``k`` i.i.d. ``N(0, σ²)``, against ``2^{−ξk/2}``.

    The comparison is done on ``Yᵢ/σ``, so the result does not depend on ``σ``
    for a fixed seed.
    """
    k = check_count(k, "k")
    check_positive(sigma, "sigma")
    check_positive(xi, "xi")
    trials = check_count(trials, "trials")
    rng = check_rng(seed)
    stats = np.empty(trials)
    for start in range(0, trials, batch):
        m = min(batch, trials - start)
        stats[start:start + m] = np.square(rng.standard_normal((m, k))).sum(axis=1)
    cut = 2 * (1 + xi) * k
    hits = stats > cut
    emp = float(hits.mean())
    bound = 2.0 ** (-xi * k / 2)
    ok, tol = tail_verdict(emp, bound, trials, "upper")
    return TailTestReport(emp, bound, trials, "upper", bool(ok), tol, int(hits.sum()),
                          cut * sigma ** 2, _seed_value(seed), stats * sigma ** 2)


def binary_entropy(p):
    if p <= 0 or p >= 1:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def fano_bound(p, s):
    """``max(0, s − h(1−p) − (1−p)s)``: mutual information implied by decoding success ``p``."""
    if not 0 <= p <= 1:
        raise ParameterError(f"p must lie in [0, 1], got {p}")
    return max(0.0, s - binary_entropy(1 - p) - (1 - p) * s)


def codeword_family(n, eta, seed=0, max_members=4096, restarts=20):
    """Binary codewords of length ``n`` with distance ``max(⌈η²n/8⌉, 2)``.

    Aims for ``2^{⌊n(1−η)⌋}`` words, capped at ``max_members``.
    """
    dist = max(math.ceil(eta ** 2 * n / 8), 2)
    target = min(2 ** math.floor(n * (1 - eta)), max_members)
    words = greedy_binary_code(n, dist, target, seed=seed, restarts=restarts)
    fam = DatabaseFamily(words.astype(np.int64), size_bound=n)
    fam.meta.update({"construction": "codewords", "min_distance": dist, "target": target})
    return fam


def _decode_rate(images, idx, noise, scale):
    hits = [nearest_neighbor_decode(images, images[i] + scale * z) == i
            for i, z in zip(idx, noise)]
    return float(np.mean(hits)), hits


def mutual_information_experiment(n, eta, epsilon, delta, trials=200, seed=0, *,
                                  k_factor=80, delta_sweep=(0.9, 0.99, 0.999),
                                  max_members=4096, log_base="e"):
    """Decode a uniform codeword from Gaussian and Laplace releases of a Lipschitz query.

    The query embeds a database by its distance to each codeword (radius
    half the code distance) and takes ``k = k_factor·n`` random signed sums.
    Recovery rates give Fano lower bounds on ``I(X; M(X))``. The Gaussian
    mechanism is also run over ``delta_sweep`` with common random numbers so
    recovery should not decrease as δ grows.
    """
    n = check_count(n, "n")
    trials = check_count(trials, "trials")
    root = np.random.SeedSequence(seed)
    s_code, s_query, s_idx, s_gauss, s_lap = root.spawn(5)
    fam = codeword_family(n, eta, seed=np.random.default_rng(s_code), max_members=max_members)
    m = len(fam)
    s = math.log2(m)
    radius = fam.delta_min / 2 if m > 1 else 1.0
    k = k_factor * n
    q = random_lipschitz_query(fam, k, np.random.default_rng(s_query), radius=radius)
    images = np.array([q(x) for x in fam.members])
    idx = np.random.default_rng(s_idx).integers(0, m, size=trials)
    z_gauss = np.random.default_rng(s_gauss).standard_normal((trials, k))
    z_lap = np.random.default_rng(s_lap).laplace(0.0, 1.0, size=(trials, k))

    deltas = sorted({float(delta), *map(float, delta_sweep)})
    sweep, records = [], []
    for dl in deltas:
        sigma = gaussian_sigma(k, PrivacyParams(epsilon, dl), log_base)
        rate, hits = _decode_rate(images, idx, z_gauss, sigma)
        sweep.append({"delta": dl, "sigma": sigma, "recovery": rate,
                      "fano_bound": fano_bound(rate, s)})
        records += [{"mechanism": "gaussian", "delta": dl, "trial": t, "index": int(i),
                     "correct": bool(h)} for t, (i, h) in enumerate(zip(idx, hits))]
    main = next(p for p in sweep if p["delta"] == float(delta))
    b = laplace_scale(k, epsilon)
    lap_rate, lap_hits = _decode_rate(images, idx, z_lap, b)
    records += [{"mechanism": "laplace", "delta": 0.0, "trial": t, "index": int(i),
                 "correct": bool(h)} for t, (i, h) in enumerate(zip(idx, lap_hits))]
    recov = [p["recovery"] for p in sweep]
    return {
        "n": n, "eta": eta, "epsilon": epsilon, "delta": delta, "trials": trials,
        "seed": _seed_value(seed), "k": k, "family_size": m, "s": s,
        "code_distance": fam.delta_min if m > 1 else None, "radius": radius,
        "gaussian": main, "delta_sweep": sweep,
        "monotone_in_delta": bool(all(a <= b + 1e-12 for a, b in zip(recov, recov[1:]))),
        "laplace": {"scale": b, "recovery": lap_rate, "fano_bound": fano_bound(lap_rate, s),
                    "chance": 1 / m, "dp_ceiling": 3 * epsilon * n},
        "records": records,
    }
