"""Command-line entry point.

Exit codes: 0 success, 1 numerical failure, 2 configuration or I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .dynamics import NumericalError
from .experiments import KINDS, SOLVERS, ExperimentConfig, run

SOLVER_NAMES = {"homog": "homog", "homogeneous": "homog"}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="png-sfp", description="Smooth fictitious play on population network games.")
    p.add_argument("command", choices=KINDS)
    p.add_argument("--config", help="JSON file with experiment settings")
    p.add_argument("--game", help="builtin game name (stag_hunt, matching_pennies) or game JSON file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--solver", choices=SOLVERS + ("homogeneous",))
    p.add_argument("--beta", type=float, help="logit temperature")
    p.add_argument("--lambda", dest="lam", type=float, help="initial sum of belief weights")
    p.add_argument("--steps", type=int, help="number of steps, or final time for continuous solvers")
    p.add_argument("--grid", type=int, help="density grid intervals, or basin-map resolution")
    p.add_argument("--runs", type=int, help="independent agent-simulation runs")
    p.add_argument("--agents", type=int, help="agents per population")
    p.add_argument("--no-plot", action="store_true", help="skip SVG output")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config, args.command) if args.config else ExperimentConfig(args.command)
        cfg = cfg.override(
            game=args.game, seed=args.seed, out=args.out, solver=SOLVER_NAMES.get(args.solver, args.solver),
            beta=args.beta, lam=args.lam, steps=args.steps, grid=args.grid, runs=args.runs, agents=args.agents,
        )
        if args.no_plot:
            cfg = cfg.override(plot=False)
        result = run(cfg)
    except NumericalError as exc:
        print(f"png-sfp: numerical failure: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, KeyError, TypeError) as exc:
        print(f"png-sfp: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(result, indent=2, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
