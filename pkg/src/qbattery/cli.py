"""Command-line entry point.

Exit codes: 0 success, 1 invalid input, 2 numerical-invariant failure.
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from .config import load_config, parse_assignment
from .errors import BatteryError, InvariantViolation
from .experiments import SCENARIO_DEFAULTS, optimal_summary, run_scenario
from .tolerances import scaled

EXIT_OK, EXIT_INVALID, EXIT_INVARIANT = 0, 1, 2

SUBCOMMANDS = {
    "trajectory": "trajectory",
    "scan": "scan_theta_tau",
    "sweep": "sweep_na",
    "figure2": "figure2",
    "figure3": "figure3",
    "figure4": "figure4",
    "figure5": "figure5",
    "optimal": None,
}

_HELP = {
    "trajectory": "run one charging trajectory and write trajectory.csv",
    "scan": "final-step power over a (theta0, tau) grid (scan.csv)",
    "sweep": "final-step power versus number of atoms (sweep_na.csv)",
    "figure2": "excitation number and distributions for both protocols",
    "figure3": "f(x), f + x f' and the Catalan table",
    "figure4": "power versus theta0, N_A and the (theta0, tau) ridge",
    "figure5": "ergotropy power and purity versus k tau",
    "optimal": "print tau0, the ridge table and the power optima",
}


def _global_flags(defaults: bool) -> argparse.ArgumentParser:
    # registered on the main parser and on every subcommand so the flags may
    # appear on either side of the subcommand name
    p = argparse.ArgumentParser(add_help=False)
    kw = {} if defaults else {"default": argparse.SUPPRESS}
    p.add_argument("--config", metavar="PATH", **({"default": None} if defaults else kw),
                   help="key = value config file")
    p.add_argument("--out", metavar="DIR", **({"default": None} if defaults else kw),
                   help="output directory (default: output_path from the config)")
    p.add_argument("--threads", metavar="N", type=int, **({"default": None} if defaults else kw),
                   help="worker processes for grid scans")
    p.add_argument("--tolerance", metavar="X", type=float,
                   **({"default": None} if defaults else kw),
                   help="scale factor applied to every numerical tolerance")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qbattery", parents=[_global_flags(True)],
        description="Collision-model charging of a ladder quantum battery.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, help=_HELP[name], parents=[_global_flags(False)])
        sp.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                        help="override one config key (repeatable)")
    return parser


def _print_optimal(stream) -> None:
    s = optimal_summary()
    print(f"tau0 = {s['tau0']:.12g}", file=stream)
    print(f"p_inc_max = {s['p_inc_max']:.12g}", file=stream)
    print(f"p_coh_max = {s['p_coh_max']:.12g}", file=stream)
    print("theta0,tau_ridge,tau_ridge_linear", file=stream)
    for th, t, lin in s["ridge"]:
        print(f"{th:.12g},{t:.12g},{lin:.12g}", file=stream)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.tolerance is not None and not (args.tolerance > 0 and math.isfinite(args.tolerance)):
            raise BatteryError("--tolerance must be a positive number")
        if args.command == "optimal":
            _print_optimal(sys.stdout)
            return EXIT_OK
        scenario = SUBCOMMANDS[args.command]
        overrides = dict(parse_assignment(a) for a in args.set)
        if args.threads is not None:
            overrides["threads"] = args.threads
        if args.tolerance is not None:
            overrides["numeric_tolerance"] = args.tolerance
        config = load_config(args.config, overrides, **SCENARIO_DEFAULTS.get(scenario, {}))
        if args.command == "scan" and config.scenario == "sweep_na":
            scenario = "sweep_na"
        config = config.with_overrides(scenario=scenario)
        out_dir = Path(args.out or config.output_path)
        with scaled(config.numeric_tolerance):
            paths = run_scenario(config, out_dir)
        for p in paths:
            print(p)
        return EXIT_OK
    except InvariantViolation as exc:
        print(f"error: numerical invariant failed: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (BatteryError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
