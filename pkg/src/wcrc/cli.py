"""Command-line entry point: ``wcrc <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .audit import AuditConfig, AuditError, audit
from .estimators import SemilinearEstimator
from .experiments import ExperimentSpec, run_experiment
from .optimal import QueryInstance, SamplingRunConfig, estimate_sampled, solve_full
from .regression import IllConditionedError, MeanMachinery, fit, fit_known_features
from .samplers import (ImportanceConfig, SelectiveConfig, SnowballConfig, gen_importance,
                       gen_selective, gen_snowball)
from .scenarios import DistributionError, load_distribution, save_distribution
from .sdp import SolverConfig, SolverError

log = logging.getLogger("wcrc")


def _read_json(path) -> dict:
    return json.loads(Path(path).read_text()) if path else {}


def _write_json(obj, path) -> None:
    text = json.dumps(obj, indent=2)
    if path:
        Path(path).write_text(text)
    else:
        print(text)


def load_table(path) -> np.ndarray:
    """Numeric CSV, with or without a header line."""
    with open(path) as fh:
        first = fh.readline()
    try:
        [float(v) for v in first.strip().split(",")]
        skip = 0
    except ValueError:
        skip = 1
    return np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2))


def cmd_gen(args) -> int:
    cfg = _read_json(args.config)
    if args.process == "importance":
        if cfg.pop("preset", None) == "table1" or "inclusion_probs" not in cfg:
            cfg["inclusion_probs"] = ImportanceConfig.table1().inclusion_probs
        dist = gen_importance(ImportanceConfig(**cfg))
    elif args.process == "snowball":
        pop, dist = gen_snowball(SnowballConfig(**cfg))
        if args.points_out:
            np.savetxt(args.points_out, pop.points, delimiter=",", header="x,y", comments="")
    else:
        dist = gen_selective(SelectiveConfig(**cfg))
    save_distribution(dist, args.out)
    log.info("wrote %d scenarios over n = %d to %s", dist.m, dist.n, args.out)
    return 0


def cmd_audit(args) -> int:
    dist = load_distribution(args.dist)
    est = SemilinearEstimator.load(args.estimator)
    cfg = AuditConfig(exact=True if args.exact else None, num_rounds=args.rounds,
                      rng_seed=args.seed)
    report = audit(est, dist, cfg)
    _write_json(report.to_dict(), args.out)
    return 0


def cmd_solve(args) -> int:
    dist = load_distribution(args.dist)
    est, bound = solve_full(dist, SolverConfig(eig_floor=args.eps, rel_tol=args.rel_tol))
    est.save(args.out)
    if args.bound_out:
        _write_json({"sdp_bound": bound}, args.bound_out)
    else:
        print(json.dumps({"sdp_bound": bound}))
    return 0


def cmd_predict(args) -> int:
    samples = load_distribution(args.samples)
    query = QueryInstance.load(args.query)
    cfg = SamplingRunConfig(t=samples.m, eps=args.eps, rng_seed=args.seed)
    print(repr(estimate_sampled(samples, query, cfg)))
    return 0


def cmd_regress(args) -> int:
    dist = load_distribution(args.dist)
    table = load_table(args.data)
    if table.shape[0] != dist.n or table.shape[1] < 2:
        raise ValueError(f"data must have {dist.n} rows and at least 2 columns")
    features, labels = table[:, :-1], table[:, -1]
    query = _read_json(args.query)
    sample = sorted(int(j) for j in query["sample"])
    target = [int(j) for j in query["target"]]
    sampling = SamplingRunConfig(t=10 * dist.m, eps=args.eps, rng_seed=args.seed)
    machinery = MeanMachinery(dist, args.mode, sampling=sampling)
    if args.known_features:
        rep = fit_known_features(machinery, sample, target, features, labels[sample],
                                 args.delta, eval_labels=labels)
    else:
        rep = fit(machinery, sample, target, features[sample], labels[sample], args.delta,
                  eval_data=(features, labels))
    _write_json(rep.to_dict(), args.out)
    return 0


def cmd_experiment(args) -> int:
    spec = ExperimentSpec.load(args.spec)
    spec.out_dir = args.out_dir
    rows, ok = run_experiment(spec)
    log.info("%d result rows written to %s", len(rows), args.out_dir)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wcrc", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a scenario distribution")
    p.add_argument("--process", required=True, choices=["importance", "snowball", "selective"])
    p.add_argument("--config", help="JSON with the process parameters")
    p.add_argument("--out", required=True)
    p.add_argument("--points-out", help="snowball only: population coordinates CSV")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("audit", help="bracket an estimator's worst-case error")
    p.add_argument("--dist", required=True)
    p.add_argument("--estimator", required=True)
    p.add_argument("--exact", action="store_true", help="force brute-force enumeration")
    p.add_argument("--rounds", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("solve", help="near-optimal estimator from the full scenario list")
    p.add_argument("--dist", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bound-out")
    p.add_argument("--eps", type=float, default=SolverConfig.eig_floor)
    p.add_argument("--rel-tol", type=float, default=SolverConfig.rel_tol)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("predict", help="estimate one query from sampled scenarios")
    p.add_argument("--samples", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("regress", help="least-squares coefficients of the target set")
    p.add_argument("--dist", required=True)
    p.add_argument("--data", required=True, help="CSV: n rows, d feature columns then the label")
    p.add_argument("--query", required=True)
    p.add_argument("--known-features", action="store_true")
    p.add_argument("--delta", type=float, default=0.2)
    p.add_argument("--mode", choices=["full", "sampled"], default="full")
    p.add_argument("--eps", type=float, default=1e-3, help="floor for sampled mode")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_regress)

    p = sub.add_parser("experiment", help="run table1, snowball or selective")
    p.add_argument("--spec", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_experiment)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DistributionError, SolverError, AuditError, IllConditionedError,
            ValueError, KeyError, OSError) as err:
        print(f"wcrc {args.command}: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
