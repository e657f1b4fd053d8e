"""Command-line entry point: ``ccwsurv <command> [options]``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ccwsurv import dgp, toy
from ccwsurv.cloning import AT_VISIT, END_OF_INTERVAL, clone_dataset
from ccwsurv.core import Strategy
from ccwsurv.harness import (ESTIMATORS, EstimatorSpec, RunConfig, _run_estimator,
                             format_metrics, run_monte_carlo)


def _load_config(args) -> RunConfig:
    obj = {}
    if args.config:
        with open(args.config) as fh:
            obj = json.load(fh)
    for key in ("scenario", "seed", "out", "threads", "replicates", "d1", "d0"):
        val = getattr(args, key, None)
        if val is not None:
            obj[key] = val
    if getattr(args, "sizes", None):
        obj["sizes"] = args.sizes
    if getattr(args, "estimators", None):
        obj["estimators"] = args.estimators
    if "scenario" not in obj:
        raise SystemExit("a scenario is required (--scenario or in --config)")
    return RunConfig.from_dict(obj)


def cmd_simulate(args) -> int:
    params = dgp.preset(args.scenario)
    cohort = dgp.simulate(params, args.n, args.seed)
    frame = cohort.to_frame()
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        path = Path(args.out) / f"{args.scenario}_n{args.n}_seed{args.seed}.csv"
        frame.to_csv(path, index=False)
        print(path)
    else:
        frame.to_csv(sys.stdout, index=False)
    return 0


def cmd_estimate(args) -> int:
    cfg = _load_config(args)
    params = cfg.params
    cohort = dgp.simulate(params, args.n, cfg.seed)
    clones = clone_dataset(cohort, [Strategy(cfg.d1, params.K), Strategy(cfg.d0, params.K)],
                           cfg.convention)
    spec = EstimatorSpec.parse(args.estimator)
    est = _run_estimator(spec.name, cohort, clones, params, cfg.d1, cfg.d0, spec.options)
    print(f"estimator: {spec.key}")
    print(f"rmst(d={cfg.d1}): {est.rmst_d1:.4f}")
    print(f"rmst(d={cfg.d0}): {est.rmst_d0:.4f}")
    print(f"contrast (months): {cfg.scale * est.theta:.3f}")
    return 0


def cmd_mc_run(args) -> int:
    cfg = _load_config(args)
    progress = (lambda msg: print(msg, file=sys.stderr)) if args.verbose else None
    result = run_monte_carlo(cfg, progress)
    print(format_metrics(result))
    print(f"elapsed: {result.elapsed:.1f} s")
    if args.check:
        if not cfg.checks:
            print("no checks configured", file=sys.stderr)
        for msg in result.failed_checks:
            print(f"CHECK FAILED: {msg}", file=sys.stderr)
        return 1 if result.failed_checks else 0
    return 0


def cmd_oracle(args) -> int:
    params = dgp.preset(args.scenario)
    K = params.K
    timedep = isinstance(params, dgp.TimedepDgpParams)
    d1 = args.d1 if args.d1 is not None else (3 if timedep else 5)
    d0 = args.d0 if args.d0 is not None else (5 if timedep else 3)
    r1 = dgp.oracle_rmst(params, Strategy(d1, K), n_mc=args.n_mc, seed=args.seed)
    r0 = dgp.oracle_rmst(params, Strategy(d0, K), n_mc=args.n_mc, seed=args.seed)
    print(f"rmst(d={d1}): {r1:.5f}")
    print(f"rmst(d={d0}): {r0:.5f}")
    print(f"contrast (months): {12.0 * (r1 - r0):.3f}")
    return 0


def _clone_lines(convention: str) -> list[str]:
    clones = clone_dataset(toy.cohort(), [toy.G0, toy.G1], convention)
    lines = []
    for c in clones.records():
        tag = "a" if c.strategy == toy.G0 else "b"
        lines.append(f"  clone {c.subject_id}{tag}: time={c.time:g} event={c.event} "
                     f"status={c.kind}")
    return lines


def cmd_toy(args) -> int:
    print("worked example 1 (weights, weighted KM)")
    for line in toy.summary_lines():
        print("  " + line)
    print(f"cloned data, {END_OF_INTERVAL}:")
    print("\n".join(_clone_lines(END_OF_INTERVAL)))
    print(f"cloned data, {AT_VISIT}:")
    print("\n".join(_clone_lines(AT_VISIT)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ccwsurv", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario_required=False):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--scenario", required=scenario_required,
                       choices=sorted(dgp.PRESETS))
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int)
        p.add_argument("--d1", type=int)
        p.add_argument("--d0", type=int)

    p = sub.add_parser("simulate", help="write one simulated dataset as CSV")
    p.add_argument("--scenario", required=True, choices=sorted(dgp.PRESETS))
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="run one estimator on one simulated dataset")
    common(p)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--estimator", default="ipcw_a_logit_n_pwexp", choices=ESTIMATORS)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("mc-run", help="Monte Carlo grid; writes raw.csv and metrics.csv")
    common(p)
    p.add_argument("--replicates", type=int)
    p.add_argument("--sizes", type=int, nargs="+")
    p.add_argument("--estimators", nargs="+", choices=ESTIMATORS)
    p.add_argument("--check", action="store_true",
                   help="exit nonzero when a configured tolerance check fails")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_mc_run)

    p = sub.add_parser("oracle", help="counterfactual RMST truth for a scenario")
    p.add_argument("--scenario", required=True, choices=sorted(dgp.PRESETS))
    p.add_argument("--d1", type=int)
    p.add_argument("--d0", type=int)
    p.add_argument("--n-mc", type=int, default=2_000_000)
    p.add_argument("--seed", type=int, default=20260101)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("toy", help="print the hand-checkable worked examples")
    p.set_defaults(func=cmd_toy)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
