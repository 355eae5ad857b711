"""Command line entry point.

Exit codes: 0 when every assertion of the run passed (or the command has no
assertions), 1 when an assertion failed, 2 for usage errors, 3 for input,
schema and resource errors.
"""

import argparse
import json
import math
import os
from pathlib import Path
import sys

import numpy as np

from . import __version__
from .analysis import estimate_section_constant
from .attacks import (SectionParams, attribute_attack, exhaustive_attack_allcoords,
                      exhaustive_attack_majority, lp_decode_attack, nearest_neighbor_decode)
from .data import AttributeTable, DatabaseFamily, database_from_json, random_attribute_table, \
    random_histogram
from .exceptions import DpalError, ParameterError
from .experiments import DEFAULTS, run_experiment
from .linalg import smallest_singular_value
from .mechanisms import (NoisyRelease, PrivacyParams, bounded_noise_adversary,
                         gaussian_mechanism, laplace_mechanism, noiseless)
from .queries import (CountingQuery, LipschitzQuery, MarginalQuery, marginal_query_evaluate,
                      random_sign_query)
from .report import (canonical_json, config_hash, load_json, marginal_answers_csv,
                     module_versions, records_csv, validate, write_report)

# options whose default is None still need a type on the command line
_NONE_TYPES = {"gamma": float, "alpha": float, "wild_magnitude": float, "theta": float,
               "sigma": float}


def _output_dir(args):
    return Path(args.output_dir or os.environ.get("DPAL_OUTPUT_DIR") or "dpal-output")


def _common(p, trials=True):
    p.add_argument("--output-dir", default=None,
                   help="report directory (default $DPAL_OUTPUT_DIR or ./dpal-output)")
    p.add_argument("--seed", type=int, default=0)
    if trials:
        p.add_argument("--trials", type=int, default=None)


def _add_experiment(sub, name):
    p = sub.add_parser(name, help=f"run the {name} experiment")
    _common(p)
    for key, default in DEFAULTS[name].items():
        if key == "trials":
            continue
        flag = "--" + key.replace("_", "-")
        if isinstance(default, bool):
            p.add_argument(flag, dest=key, action=argparse.BooleanOptionalAction,
                           default=default)
        elif isinstance(default, list):
            p.add_argument(flag, dest=key, nargs="+", type=type(default[0]), default=None)
        elif default is None:
            p.add_argument(flag, dest=key, type=_NONE_TYPES.get(key, float), default=None)
        else:
            p.add_argument(flag, dest=key, type=type(default), default=None)
    p.set_defaults(handler=_cmd_experiment, experiment=name)


def build_parser():
    parser = argparse.ArgumentParser(prog="dpal", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"dpal {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in DEFAULTS:
        _add_experiment(sub, name)

    p = sub.add_parser("run", help="run an experiment from a flat JSON config")
    p.add_argument("--config", required=True)
    _common(p, trials=False)
    p.set_defaults(handler=_cmd_run)

    att = sub.add_parser("attack", help="run one attack on a synthetic instance")
    asub = att.add_subparsers(dest="attack", required=True)
    p = asub.add_parser("lp-decode")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--n", type=int, default=None, help="database size (default 2d)")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--wild-magnitude", type=float, default=1000.0)
    p.add_argument("--section-samples", type=int, default=2000)
    _common(p, trials=False)
    p.set_defaults(handler=_cmd_attack_lp)
    for name in ("majority", "allcoords"):
        p = asub.add_parser(f"exhaustive-{name}")
        p.add_argument("--d", type=int, required=True)
        p.add_argument("--n", type=int, required=True)
        p.add_argument("--k", type=int, required=True)
        p.add_argument("--noise", type=float, default=0.0, help="uniform noise bound")
        p.add_argument("--wild-fraction", type=float, default=0.0)
        if name == "majority":
            p.add_argument("--tol", type=float, required=True)
            p.add_argument("--eta", type=float, required=True)
        else:
            p.add_argument("--theta", type=float, required=True)
        _common(p, trials=False)
        p.set_defaults(handler=_cmd_attack_exhaustive, kind=name)
    p = asub.add_parser("attribute")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d-prime", type=int, required=True)
    p.add_argument("--ell", type=int, default=2)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--gamma", type=float, default=0.0)
    _common(p, trials=False)
    p.set_defaults(handler=_cmd_attack_attribute)

    p = sub.add_parser("make-release", help="write a synthetic database, query and release")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--mechanism", choices=["noiseless", "laplace", "gaussian", "bounded"],
                   default="noiseless")
    p.add_argument("--epsilon", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=0.01)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.0)
    _common(p, trials=False)
    p.set_defaults(handler=_cmd_make_release)

    p = sub.add_parser("validate", help="audit a released answer vector against its query")
    p.add_argument("--query", required=True)
    p.add_argument("--release", required=True)
    p.add_argument("--table", default=None, help="attribute table (marginal queries)")
    p.add_argument("--alpha", type=float, default=None,
                   help="accuracy threshold (default: release profile, else 1)")
    p.add_argument("--gamma", type=float, default=None,
                   help="tolerated inaccurate fraction (default: release profile, else 0.05)")
    _common(p, trials=False)
    p.set_defaults(handler=_cmd_validate)
    return parser


def _cmd_experiment(args):
    cfg = {k: getattr(args, k) for k in DEFAULTS[args.experiment]
           if getattr(args, k, None) is not None}
    cfg["seed"] = args.seed
    if args.trials is not None:
        cfg["trials"] = args.trials
    return _finish_experiment(args.experiment, cfg, args)


def _cmd_run(args):
    cfg = load_json(args.config, "config")
    name = cfg["experiment"]
    if args.output_dir is None and cfg.get("output_dir"):
        args.output_dir = cfg["output_dir"]
    cfg.setdefault("seed", args.seed)
    return _finish_experiment(name, cfg, args)


def _finish_experiment(name, cfg, args):
    report = run_experiment(name, cfg)
    jpath, _ = write_report(report, _output_dir(args))
    for key, ok in report.assertions.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}:{key}")
    print(f"report: {jpath}")
    return 0 if report.passed else 1


def _write_attack(name, config, result, args, extra=None):
    out = _output_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    body = result.to_json(include_timing=False)
    validate(body, "attack_result")
    doc = {"schema": "dpal/attack_result/v1", "attack": name, "seed": args.seed,
           "config": config, "config_hash": config_hash(config),
           "versions": module_versions(), "result": body}
    if extra:
        doc.update(extra)
    path = out / f"attack-{name}.json"
    path.write_text(canonical_json(doc))
    (out / f"attack-{name}.csv").write_text(records_csv([{
        "attack": name, "seed": args.seed, "l1_error": result.l1_error,
        "bound_used": result.bound_used, "success": result.success,
        "elapsed": result.elapsed}]))
    print(f"{name}: l1_error={result.l1_error} bound={result.bound_used} "
          f"success={result.success}")
    print(f"report: {path}")
    return 0


def _cmd_attack_lp(args):
    rng = np.random.default_rng(args.seed)
    n = 2 * args.d if args.n is None else args.n
    A = random_sign_query(args.d, args.k, rng)
    x = random_histogram(args.d, n, rng).counts
    est = estimate_section_constant(A.matrix, args.section_samples, rng)
    params = SectionParams(max(est.delta_hat, 1e-12), smallest_singular_value(A.matrix))
    rel = bounded_noise_adversary(A(x), args.alpha, args.gamma,
                                  max(args.wild_magnitude, args.alpha), rng)
    res = lp_decode_attack(A, rel, params, args.alpha, truth=x)
    cfg = {"d": args.d, "k": args.k, "n": n, "alpha": args.alpha, "gamma": args.gamma,
           "wild_magnitude": args.wild_magnitude, "section_samples": args.section_samples,
           "seed": args.seed}
    return _write_attack("lp-decode", cfg, res, args)


def _cmd_attack_exhaustive(args):
    rng = np.random.default_rng(args.seed)
    A = random_sign_query(args.d, args.k, rng)
    x = random_histogram(args.d, args.n, rng).counts
    rel = bounded_noise_adversary(A(x), args.noise, args.wild_fraction,
                                  max(10.0 * args.n, args.noise), rng)
    cfg = {"d": args.d, "n": args.n, "k": args.k, "noise": args.noise,
           "wild_fraction": args.wild_fraction, "seed": args.seed}
    if args.kind == "majority":
        cfg.update(tol=args.tol, eta=args.eta)
        res = exhaustive_attack_majority(A, rel, args.d, args.n, args.tol, args.eta, truth=x)
    else:
        cfg.update(theta=args.theta)
        res = exhaustive_attack_allcoords(A, rel, args.d, args.n, args.theta, truth=x)
    return _write_attack(f"exhaustive-{args.kind}", cfg, res, args)


def _cmd_attack_attribute(args):
    rng = np.random.default_rng(args.seed)
    alpha = math.sqrt(args.n) / 10 if args.alpha is None else args.alpha
    table = random_attribute_table(args.n, args.d_prime, rng).with_hidden(args.d_prime - 1)
    _, hidden = table.known()
    answers = marginal_query_evaluate(table, MarginalQuery(args.d_prime, args.ell))
    rel = bounded_noise_adversary(answers, alpha, args.gamma, max(10.0 * args.n, alpha), rng)
    res = attribute_attack(table, rel, args.ell, truth=hidden, alpha=alpha, seed=args.seed)
    cfg = {"n": args.n, "d_prime": args.d_prime, "ell": args.ell, "alpha": alpha,
           "gamma": args.gamma, "seed": args.seed}
    return _write_attack("attribute", cfg, res, args)


def _cmd_make_release(args):
    rng = np.random.default_rng(args.seed)
    n = 2 * args.d if args.n is None else args.n
    A = random_sign_query(args.d, args.k, rng)
    x = random_histogram(args.d, n, rng)
    y = A(x)
    if args.mechanism == "noiseless":
        rel = noiseless(y, args.seed)
    elif args.mechanism == "laplace":
        rel = laplace_mechanism(y, args.k, args.epsilon, rng)
    elif args.mechanism == "gaussian":
        rel = gaussian_mechanism(y, args.k, PrivacyParams(args.epsilon, args.delta), rng)
    else:
        rel = bounded_noise_adversary(y, args.alpha, args.gamma, 1000.0, rng)
    rel.seed = args.seed
    out = _output_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    for stem, obj in (("database", x), ("query", A), ("release", rel)):
        (out / f"{stem}.json").write_text(canonical_json(obj.to_json()))
    print(f"wrote database.json, query.json, release.json to {out}")
    return 0


def _load_query(obj):
    kind = obj["kind"]
    if kind == "counting":
        return CountingQuery(np.asarray(obj["matrix"], dtype=np.float64))
    if kind == "marginal":
        return MarginalQuery(obj["d_prime"], obj["ell"])
    fam = DatabaseFamily(np.asarray(obj["anchors"]), obj["size_bound"])
    return LipschitzQuery(fam, np.asarray(obj["signs"], dtype=np.float64), obj.get("radius"))


def _cmd_validate(args):
    q = _load_query(load_json(args.query, "query"))
    rel = NoisyRelease.from_json(load_json(args.release, "release"))
    profile = rel.profile or {}
    alpha = args.alpha if args.alpha is not None else profile.get("alpha", 1.0)
    gamma = args.gamma if args.gamma is not None else profile.get("gamma", 0.05)
    if isinstance(q, CountingQuery):
        est = estimate_section_constant(q.matrix, 2000, args.seed)
        sigma = smallest_singular_value(q.matrix)
        if sigma <= 0:
            raise ParameterError("query matrix is rank deficient; LP decoding is not identifiable")
        res = lp_decode_attack(q, rel, SectionParams(max(est.delta_hat, 1e-12), sigma), alpha)
        hit = res.hit_fraction
        name = "lp-decode"
    elif isinstance(q, MarginalQuery):
        if args.table is None:
            raise ParameterError("marginal releases need --table with a hidden column")
        table = database_from_json(load_json(args.table, "database"))
        if not isinstance(table, AttributeTable):
            raise ParameterError("--table must hold an attribute table")
        res = attribute_attack(table, rel, q.ell, alpha=alpha, seed=args.seed)
        hit = res.hit_fraction
        name = "attribute"
    else:
        images = np.array([q(x) for x in q.anchors.members])
        i = nearest_neighbor_decode(images, rel.answers)
        hit = float(np.mean(np.abs(images[i] - rel.answers) <= alpha))
        res = None
        name = "nearest-anchor"
    blatant = hit >= 1 - gamma
    verdict = ("blatantly non-private" if blatant
               else "no reconstruction at configured thresholds")
    audit = {"schema": "dpal/audit/v1", "verdict": verdict, "attack": name,
             "alpha": alpha, "gamma": gamma, "consistent_fraction": hit,
             "result": None if res is None else res.to_json(include_timing=False)}
    if isinstance(q, MarginalQuery):
        audit["marginal_patterns"] = len(q.patterns())
    out = _output_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    (out / "audit.json").write_text(canonical_json(audit))
    if isinstance(q, MarginalQuery):
        (out / "marginals.csv").write_text(marginal_answers_csv(q.patterns(), rel.answers))
    print(f"verdict: {verdict} (consistent fraction {hit:.3f}, needs {1 - gamma:.3f})")
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except DpalError as e:
        print(f"dpal: error: {e}", file=sys.stderr)
        for p in getattr(e, "problems", []) or []:
            print(f"  - {p}", file=sys.stderr)
        for attr in ("estimate", "limit", "byte_offset"):
            val = getattr(e, attr, None)
            if val is not None:
                print(f"  {attr}: {val}", file=sys.stderr)
        return 3
    except (OSError, json.JSONDecodeError) as e:
        print(f"dpal: error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
