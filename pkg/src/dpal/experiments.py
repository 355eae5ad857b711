"""Named desk-scale experiments.

Each experiment takes a flat config (see ``DEFAULTS``), runs its Monte Carlo
trials from ``SeedSequence(seed)`` and returns an :class:`ExperimentReport`
whose ``assertions`` decide the exit status of the command line runner.
"""

from concurrent.futures import ThreadPoolExecutor
import math
import os

import numpy as np

from .analysis import (chi_square_tail_test, estimate_section_constant, hadamard_sigma_scaling,
                       mutual_information_experiment, rademacher_deviation_test)
from .attacks import (SectionParams, attribute_attack, epsilon_delta_witness,
                      exhaustive_attack_allcoords, exhaustive_attack_majority, filter_candidates,
                      lp_decode_attack)
from .data import DatabaseFamily, random_attribute_table, random_histogram
from .exceptions import ParameterError
from .linalg import smallest_singular_value
from .mechanisms import PrivacyParams, bounded_noise_adversary, noiseless
from .queries import MarginalQuery, marginal_query_evaluate, random_sign_query, \
    unit_vector_family, verify_packing
from .report import ExperimentReport

DEFAULTS = {
    "lp-decode-sweep": {"d": 32, "k": 128, "n": 64, "alpha": 1.0, "gamma": None,
                        "gamma_cap": 0.02, "wild_magnitude": 1000.0, "section_samples": 2000,
                        "adversarial": False, "min_success": 0.95, "trials": 100},
    "marginal-attribute-attack": {"n": 32, "d_prime": 64, "ell": 2, "alpha": None,
                                  "gamma": 0.02, "wild_magnitude": None, "error_fraction": 0.1,
                                  "min_success": 0.9, "trials": 100},
    "blatant-small-universe": {"d": 3, "n": 6, "eta": 0.25, "algorithm": "both",
                               "wild_fraction": 0.25, "theta": None, "min_success": 0.95,
                               "trials": 100},
    "packing-certify": {"d": 64, "k": 40, "epsilon": 0.025, "min_pass": 0.9, "trials": 100},
    "eps-delta-witness": {"n": 24, "k_factor": 8, "delta": 0.01, "epsilon": 1.0,
                          "gamma": 0.05, "eta": 1.0, "sigma": None,
                          "mechanisms": ["noiseless", "gaussian"], "trials": 20},
    "mutual-info-separation": {"n": 16, "eta": 0.25, "epsilon": 0.5, "delta": 0.5,
                               "delta_sweep": [0.9, 0.99, 0.999], "k_factor": 80,
                               "min_recovery": 0.99, "min_fano_fraction": 0.9,
                               "max_laplace_fano_fraction": 0.2, "trials": 200},
    "rademacher-tail": {"d": 20, "n": 20.0, "theta": None, "bound": 0.9, "trials": 100000},
    "chi-square-tail": {"k": 50, "sigma": 1.0, "xi": 1.0, "trials": 10000},
    "hadamard-sigma": {"d_primes": [32, 64, 128], "ell": 2, "n_ratio": 0.5, "trials": 20},
}


def threads():
    try:
        return max(1, int(os.environ.get("DPAL_THREADS", "1")))
    except ValueError:
        return 1


def _map(fn, seqs, n_jobs):
    """Run ``fn(i, seq)`` per trial; results come back in trial order."""
    jobs = list(enumerate(seqs))
    if n_jobs <= 1:
        return [fn(i, s) for i, s in jobs]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(lambda a: fn(*a), jobs))


def resolve_config(experiment, config=None):
    if experiment not in DEFAULTS:
        raise ParameterError(f"unknown experiment {experiment!r}")
    cfg = dict(DEFAULTS[experiment])
    cfg["seed"] = 0
    for key, value in (config or {}).items():
        if key in ("experiment", "output_dir"):
            continue
        if key not in cfg:
            raise ParameterError(f"{experiment} has no option {key!r}")
        cfg[key] = value
    return cfg


def run_experiment(experiment, config=None, n_jobs=None):
    cfg = resolve_config(experiment, config)
    n_jobs = threads() if n_jobs is None else n_jobs
    summary, assertions, records = RUNNERS[experiment](cfg, n_jobs)
    return ExperimentReport(experiment, {"experiment": experiment, **cfg}, cfg["seed"],
                            summary, assertions, records)


def _lp_decode_trial(cfg, i, seq):
    rng = np.random.default_rng(seq)
    d, k = cfg["d"], cfg["k"]
    A = random_sign_query(d, k, rng)
    x = random_histogram(d, cfg["n"], rng).counts
    est = estimate_section_constant(A.matrix, cfg["section_samples"], rng)
    sigma = smallest_singular_value(A.matrix)
    params = SectionParams(max(est.delta_hat, 1e-12), sigma)
    gamma = cfg["gamma"]
    if gamma is None:
        gamma = min(params.gamma_wild, cfg["gamma_cap"])
    alpha = cfg["alpha"]
    truth = A(x)
    rel = bounded_noise_adversary(truth, alpha, gamma, max(cfg["wild_magnitude"], alpha), rng)
    res = lp_decode_attack(A, rel, params, alpha, truth=x)
    if cfg["adversarial"]:
        # push every wild coordinate along the error the decoder made last time
        push = A.matrix @ (res.reconstruction - x)
        push = np.where(push == 0, rng.choice([-1.0, 1.0], size=k), np.sign(push))
        rel = bounded_noise_adversary(truth, alpha, gamma, max(cfg["wild_magnitude"], alpha),
                                      rng, wild_signs=push)
        res = lp_decode_attack(A, rel, params, alpha, truth=x)
    chain = res.certificate["proof_chain"]
    return {"trial": i, "delta_hat": params.delta_section, "sigma_min": sigma, "gamma": gamma,
            "l1_error": res.l1_error, "bound": res.bound_used, "success": res.success,
            "chain_lhs": chain["lhs"], "chain_rhs": chain["rhs_stated"],
            "chain_ok": chain["lhs"] <= chain["rhs_stated"] + 1e-7 * max(1.0, chain["rhs_stated"]),
            "wild_fraction": chain["wild_fraction"]}


def _lp_decode_sweep(cfg, n_jobs):
    seqs = np.random.SeedSequence(cfg["seed"]).spawn(cfg["trials"])
    recs = _map(lambda i, s: _lp_decode_trial(cfg, i, s), seqs, n_jobs)
    rate = float(np.mean([r["success"] for r in recs]))
    summary = {"success_rate": rate, "max_l1_error": max(r["l1_error"] for r in recs),
               "min_bound": min(r["bound"] for r in recs),
               "median_delta_hat": float(np.median([r["delta_hat"] for r in recs])),
               "proof_chain_failures": sum(not r["chain_ok"] for r in recs)}
    assertions = {"success_rate": rate >= cfg["min_success"],
                  "proof_chain": all(r["chain_ok"] for r in recs)}
    return summary, assertions, recs


def _attribute_trial(cfg, i, seq):
    rng = np.random.default_rng(seq)
    n, dp = cfg["n"], cfg["d_prime"]
    alpha = math.sqrt(n) / 10 if cfg["alpha"] is None else cfg["alpha"]
    wild = 10 * n if cfg["wild_magnitude"] is None else cfg["wild_magnitude"]
    table = random_attribute_table(n, dp, rng).with_hidden(dp - 1)
    _, hidden = table.known()
    answers = marginal_query_evaluate(table, MarginalQuery(dp, cfg["ell"]))
    rel = bounded_noise_adversary(answers, alpha, cfg["gamma"], max(wild, alpha), rng)
    res = attribute_attack(table, rel, cfg["ell"], truth=hidden, alpha=alpha,
                           error_budget=cfg["error_fraction"] * n, seed=rng)
    return {"trial": i, "hamming_error": res.l1_error, "budget": res.bound_used,
            "success": res.success, "rows": res.certificate["rows"],
            "warnings": ";".join(res.warnings)}


def _marginal_attribute_attack(cfg, n_jobs):
    seqs = np.random.SeedSequence(cfg["seed"]).spawn(cfg["trials"])
    recs = _map(lambda i, s: _attribute_trial(cfg, i, s), seqs, n_jobs)
    rate = float(np.mean([r["success"] for r in recs]))
    summary = {"success_rate": rate, "mean_hamming_error":
               float(np.mean([r["hamming_error"] for r in recs])),
               "max_hamming_error": max(r["hamming_error"] for r in recs)}
    return summary, {"success_rate": rate >= cfg["min_success"]}, recs


def _blatant_trial(cfg, i, seq):
    rng = np.random.default_rng(seq)
    d, n, eta = cfg["d"], cfg["n"], cfg["eta"]
    out = {"trial": i}
    if cfg["algorithm"] in ("majority", "both"):
        k = math.ceil(8 * d * math.log2(n) / eta ** 2)
        tol = n / (10 * math.sqrt(d))
        A = random_sign_query(d, k, rng)
        x = random_histogram(d, n, rng).counts
        rel = bounded_noise_adversary(A(x), tol, cfg["wild_fraction"], 10 * n, rng)
        res = exhaustive_attack_majority(A, rel, d, n, tol, eta, truth=x)
        need = 0.5 + eta / 4
        passing = filter_candidates(A, rel, d, n,
                                    lambda dev: np.mean(dev <= tol, axis=1) >= need,
                                    first_only=False)
        far = sum(np.abs(c - x).sum() > n / 10 for _, c in passing)
        out.update(k_majority=k, majority_error=res.l1_error, majority_success=res.success,
                   far_candidates=int(far))
    if cfg["algorithm"] in ("allcoords", "both"):
        theta = n / 4 if cfg["theta"] is None else cfg["theta"]
        k = math.ceil(2 * d * math.log2(n) * math.exp(2 * d * theta ** 2 / n ** 2))
        A = random_sign_query(d, k, rng)
        x = random_histogram(d, n, rng).counts
        rel = bounded_noise_adversary(A(x), theta / 10, 0.0, theta / 10, rng)
        res = exhaustive_attack_allcoords(A, rel, d, n, theta, truth=x)
        out.update(k_allcoords=k, allcoords_error=res.l1_error,
                   allcoords_success=res.success)
    return out


def _blatant_small_universe(cfg, n_jobs):
    if cfg["algorithm"] not in ("majority", "allcoords", "both"):
        raise ParameterError("algorithm must be majority, allcoords or both")
    seqs = np.random.SeedSequence(cfg["seed"]).spawn(cfg["trials"])
    recs = _map(lambda i, s: _blatant_trial(cfg, i, s), seqs, n_jobs)
    summary, assertions = {}, {}
    if "majority_success" in recs[0]:
        rate = float(np.mean([r["majority_success"] for r in recs]))
        summary.update(majority_success_rate=rate, k_majority=recs[0]["k_majority"])
        assertions["majority_success_rate"] = rate >= cfg["min_success"]
        assertions["no_far_candidate"] = all(
            r["far_candidates"] == 0 for r in recs if r["majority_success"])
    if "allcoords_success" in recs[0]:
        rate = float(np.mean([r["allcoords_success"] for r in recs]))
        summary.update(allcoords_success_rate=rate, k_allcoords=recs[0]["k_allcoords"])
        assertions["allcoords_success_rate"] = rate >= cfg["min_success"]
    return summary, assertions, recs


def _packing_certify(cfg, n_jobs):
    d, k, eps = cfg["d"], cfg["k"], cfg["epsilon"]
    fam = unit_vector_family(d, k, eps)
    seqs = np.random.SeedSequence(cfg["seed"]).spawn(cfg["trials"])

    def trial(i, seq):
        q = random_sign_query(d, k, np.random.default_rng(seq))
        cert = verify_packing(fam, q, eps)
        return {"trial": i, "ok": cert.hypothesis_ok, "eta": cert.eta, "delta": cert.delta,
                "s": cert.s, "violated": "".join(cert.violated)}

    recs = _map(trial, seqs, n_jobs)
    rate = float(np.mean([r["ok"] for r in recs]))
    q = random_sign_query(d, k, np.random.default_rng(cfg["seed"]))
    dup = DatabaseFamily(np.vstack([fam.members[:1], fam.members[:1]]), fam.size_bound,
                         meta={"construction": "collapsed"}, )
    collapsed = verify_packing(dup, q, eps)
    summary = {"pass_rate": rate, "a": fam.meta["a"], "family_size": len(fam),
               "min_eta": min(r["eta"] for r in recs), "collapsed": collapsed.to_json()}
    assertions = {"pass_rate": rate >= cfg["min_pass"],
                  "collapsed_fails_c": "c" in collapsed.violated}
    return summary, assertions, recs


def _gaussian_noise(sigma):
    return lambda y, rng: y + rng.normal(0.0, sigma, size=y.shape)


def _eps_delta_witness(cfg, n_jobs):
    n = cfg["n"]
    params = PrivacyParams(cfg["epsilon"], cfg["delta"])
    sigma = 10 * n if cfg["sigma"] is None else cfg["sigma"]
    summary, assertions, recs = {}, {}, []
    for name in cfg["mechanisms"]:
        if name == "noiseless":
            mech = lambda y, rng: noiseless(y)
        elif name == "gaussian":
            mech = _gaussian_noise(sigma)
        else:
            raise ParameterError(f"unknown witness mechanism {name!r}")
        rep = epsilon_delta_witness(mech, None, n, params, cfg["trials"], cfg["seed"],
                                    gamma=cfg["gamma"], eta=cfg["eta"],
                                    k_factor=cfg["k_factor"], n_jobs=n_jobs)
        body = rep.to_json()
        body.pop("trials")
        summary[name] = body
        recs += [{"mechanism": name, **r} for r in rep.trials]
        if name == "noiseless":
            assertions["noiseless_fires"] = rep.fires and rep.rate == 1.0
        else:
            assertions["gaussian_gated"] = (not rep.fires) and rep.rate == 0.0
    summary["gaussian_sigma"] = sigma
    return summary, assertions, recs


def _mutual_info_separation(cfg, n_jobs):
    rep = mutual_information_experiment(cfg["n"], cfg["eta"], cfg["epsilon"], cfg["delta"],
                                        cfg["trials"], cfg["seed"], k_factor=cfg["k_factor"],
                                        delta_sweep=tuple(cfg["delta_sweep"]))
    recs = rep.pop("records")
    s = rep["s"]
    assertions = {
        "gaussian_recovery": rep["gaussian"]["recovery"] >= cfg["min_recovery"],
        "gaussian_fano": rep["gaussian"]["fano_bound"] >= cfg["min_fano_fraction"] * s,
        "laplace_fano": rep["laplace"]["fano_bound"] <= cfg["max_laplace_fano_fraction"] * s,
        "monotone_in_delta": rep["monotone_in_delta"],
    }
    return rep, assertions, recs


def _rademacher_tail(cfg, n_jobs):
    d, n = cfg["d"], float(cfg["n"])
    theta = n / (10 * math.sqrt(d)) if cfg["theta"] is None else cfg["theta"]
    a = np.full(d, n / d)
    rep = rademacher_deviation_test(a, theta, cfg["trials"], cfg["seed"], bound=cfg["bound"])
    theorem = rademacher_deviation_test(a, theta, cfg["trials"], cfg["seed"])
    recs = [{"trial": t, "sum": float(v)} for t, v in enumerate(rep.samples)]
    summary = {"stated": rep.to_json(), "theorem": theorem.to_json()}
    return summary, {"stated_bound": rep.passed, "theorem_bound": theorem.passed}, recs


def _chi_square_tail(cfg, n_jobs):
    rep = chi_square_tail_test(cfg["k"], cfg["sigma"], cfg["xi"], cfg["trials"], cfg["seed"])
    recs = [{"trial": t, "sum_squares": float(v)} for t, v in enumerate(rep.samples)]
    return rep.to_json(), {"bound": rep.passed, "no_exceedance": rep.exceedances == 0}, recs


def _hadamard_sigma(cfg, n_jobs):
    rep = hadamard_sigma_scaling(cfg["d_primes"], cfg["ell"], cfg["n_ratio"], cfg["trials"],
                                 cfg["seed"])
    recs = rep.pop("records")
    for p in rep["points"]:
        p.pop("ratios")
    return rep, {"trend": rep["trend_ok"], "all_positive": rep["all_positive"]}, recs


RUNNERS = {
    "lp-decode-sweep": _lp_decode_sweep,
    "marginal-attribute-attack": _marginal_attribute_attack,
    "blatant-small-universe": _blatant_small_universe,
    "packing-certify": _packing_certify,
    "eps-delta-witness": _eps_delta_witness,
    "mutual-info-separation": _mutual_info_separation,
    "rademacher-tail": _rademacher_tail,
    "chi-square-tail": _chi_square_tail,
    "hadamard-sigma": _hadamard_sigma,
}
