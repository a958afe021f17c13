# src/qmpx/cli.py

"""Command-line entry points.

    qmpx solve <problem.json> [--path auto|bisection|sdr|socp]
    qmpx simulate <scenario.json> --snr 0:5:30 --trials 500 --symbols 10000
                  --seed N --out curve.csv
    qmpx initstudy <scenario.json> --snr ... --out traces.csv
                  [--curves curves.csv]
    qmpx scenario <case> --out scenario.json [--set key=value ...]

QMPX_THREADS caps the sweep worker count.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import bcd, network, qmp, solvers, sweep


def _report_to_json(rep: solvers.SolveReport) -> dict:
    out = {
        "path": rep.path,
        "objective": rep.objective,
        "iterations": rep.iterations,
        "kkt_residual": rep.kkt_residual,
        "constraint_violation": rep.constraint_violation,
        "x_opt": [[[float(v.real), float(v.imag)] for v in row] for row in np.atleast_2d(rep.x_opt)],
    }
    if rep.mu is not None:
        out["mu"] = rep.mu
    if rep.sdr_rank_gap is not None:
        out["sdr_rank_gap"] = rep.sdr_rank_gap
    if rep.lower_bound is not None:
        out["lower_bound"] = rep.lower_bound
    return out


def _cmd_solve(args) -> int:
    problem = qmp.load_problem(args.problem)
    if args.path == "auto":
        rep = solvers.solve_auto(problem, tol=args.tol)
    elif args.path == "bisection":
        rep = solvers.solve_single_constraint(problem)
    elif args.path == "socp":
        rep = solvers.solve_socp(problem, tol=args.tol)
    else:
        rep = solvers.solve_sdr(problem, tol=args.tol)
    json.dump(_report_to_json(rep), sys.stdout, indent=1)
    sys.stdout.write("\n")
    return 0


def _spec_from_args(args) -> sweep.SweepSpec:
    scenario = network.load_scenario(args.scenario)
    return sweep.SweepSpec(
        scenario=scenario,
        snr_grid=sweep.parse_grid(args.snr),
        trials=args.trials,
        symbols=args.symbols,
        strategies=tuple(args.strategies.split(",")),
        initializers=tuple(args.initializers.split(",")),
        seed=args.seed,
        max_sweeps=args.max_sweeps,
        tolerance=args.tolerance,
    )


def _cmd_simulate(args) -> int:
    spec = _spec_from_args(args)
    rows, _ = sweep.run_sweep(spec)
    sweep.emit_csv(rows, args.out)
    skipped = sum(r["skipped"] for r in rows)
    print(f"wrote {len(rows)} rows to {args.out} (skipped trials: {skipped})")
    return 0


def _cmd_initstudy(args) -> int:
    args.strategies = "Proposed"
    spec = _spec_from_args(args)
    rows, traces = sweep.run_sweep(spec, collect_traces=True)
    sweep.emit_traces_csv(traces, args.out)
    if args.curves:
        sweep.emit_csv(rows, args.curves)
    print(f"wrote per-sweep traces to {args.out}")
    return 0


def _cmd_scenario(args) -> int:
    params = {}
    for item in args.set or []:
        key, _, value = item.partition("=")
        try:
            params[key] = json.loads(value)
        except json.JSONDecodeError:
            params[key] = value
    scen = network.make_case(args.case, seed=args.seed, **params)
    network.save_scenario(scen, args.out)
    for note in scen.notes:
        print(f"note: {note}")
    print(f"wrote {args.case} scenario to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qmpx", description=__doc__.strip().splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a QMP problem file")
    p.add_argument("problem")
    p.add_argument("--path", choices=("auto", "bisection", "sdr", "socp"), default="auto")
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(func=_cmd_solve)

    for name, help_text in (("simulate", "Monte-Carlo SNR sweep"), ("initstudy", "initializer study traces")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("scenario")
        p.add_argument("--snr", required=True, help="dB grid, start:step:stop or comma list")
        p.add_argument("--trials", type=int, default=500)
        p.add_argument("--symbols", type=int, default=10000)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True)
        p.add_argument("--max-sweeps", type=int, default=15, dest="max_sweeps")
        p.add_argument("--tolerance", type=float, default=1e-6)
        if name == "simulate":
            p.add_argument("--strategies", default="Proposed,UniformPA")
            p.add_argument("--initializers", default="FullRankIdentityFeasible")
            p.set_defaults(func=_cmd_simulate)
        else:
            p.add_argument(
                "--initializers",
                default="FullRankIdentityFeasible,FullRankIdentityInfeasible,RankDeficientFeasible",
            )
            p.add_argument("--curves", default=None, help="also write the averaged-MSE curve CSV")
            p.set_defaults(func=_cmd_initstudy)

    p = sub.add_parser("scenario", help="write a scenario JSON file for a case tag")
    p.add_argument("case", choices=network.CASES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=_cmd_scenario)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
