"""
Command-line front end for the penalty / policy iteration experiments.

Usage:
    # Price the butterfly spread with the default profile (desk)
    pdm run penalty-hjb price

    # Both solvers on a custom grid, results under ./out
    pdm run penalty-hjb price --method both --grid-m 200 --grid-n 200 --output-dir out

    # Penalty error against rho, repeated on extra grids
    pdm run penalty-hjb penalty-sweep --rho-list 1e1,1e2,1e3,1e4,1e5,1e6 --grids 900x30,30x900

    # Iteration histograms, runtimes and the brute-force cross-check
    pdm run penalty-hjb iteration-stats
    pdm run penalty-hjb timing --grids 400x400
    pdm run penalty-hjb oracle-check --seed 42 --trials 200

Exit codes: 0 success, 1 usage or config error, 2 solver failure, 3 oracle mismatch.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Sequence

from penalty_hjb.core.errors import (
    ArbitrageConstraintError,
    ConfigError,
    HJBError,
)
from penalty_hjb.experiments.config_builder import DEFAULT_PROFILE, RunConfig, load_run_config
from penalty_hjb.experiments.experiments import (
    run_iteration_stats,
    run_oracle_check,
    run_penalty_sweep,
    run_price,
    run_timing,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SOLVER = 2
EXIT_ORACLE = 3


class _ArgumentParser(argparse.ArgumentParser):
    """Reports usage errors with exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", default=None, help="Path to YAML config (optional).")
    common.add_argument("--profile", "-p", default=None,
                        help=f"Profile inside a profiles file (default {DEFAULT_PROFILE}).")
    common.add_argument("--output-dir", "-o", default=None, help="Directory for CSV outputs.")
    common.add_argument("--method", choices=("penalty", "policy", "both"), default=None)
    common.add_argument("--rho", type=float, default=None, help="Penalty parameter.")
    common.add_argument("--tol", type=float, default=None)
    common.add_argument("--max-iters", type=int, default=None)
    common.add_argument("--termination", choices=("residual", "stagnation"), default=None)
    common.add_argument("--reference-control", type=int, default=None)
    common.add_argument("--grid-m", type=int, default=None, help="Number of time levels M.")
    common.add_argument("--grid-n", type=int, default=None, help="Number of space nodes N.")
    common.add_argument("--rho-list", default=None, help="Comma-separated penalty parameters.")
    common.add_argument("--stats-rho-list", default=None,
                        help="Comma-separated penalty parameters for iteration-stats and timing.")
    common.add_argument("--grids", default=None, help="Comma-separated MxN grids, e.g. 400x400,900x30.")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--trials", type=int, default=None)
    common.add_argument("--jobs", type=int, default=None, help="Worker processes for independent runs.")
    common.add_argument("--log-level", default="WARNING",
                        choices=("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"))
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="penalty-hjb",
                             description="Penalty and policy iteration solvers for discrete HJB equations.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)
    common = _common_options()
    sub.add_parser("price", parents=[common], help="Price the configured payoff; writes solution.csv, stats.csv.")
    sub.add_parser("penalty-sweep", parents=[common], help="Penalty error against rho; writes sweep.csv.")
    sub.add_parser("iteration-stats", parents=[common], help="Iteration histograms; writes iterations.csv.")
    sub.add_parser("timing", parents=[common], help="Penalty vs policy runtimes; writes timings.csv.")
    sub.add_parser("oracle-check", parents=[common], help="Cross-check both solvers against brute force.")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {
        "output_dir": args.output_dir,
        "method": args.method,
        "rho": args.rho,
        "tol": args.tol,
        "max_iters": args.max_iters,
        "termination": args.termination,
        "reference_control": args.reference_control,
        "M": args.grid_m,
        "N": args.grid_n,
        "rho_list": args.rho_list,
        "stats_rho_list": args.stats_rho_list,
        "grid_list": args.grids,
        "seed": args.seed,
        "trials": args.trials,
        "jobs": args.jobs,
    }


def _fmt_slope(slope: float | None) -> str:
    return "n/a" if slope is None else f"{slope:.4f}"


def _cmd_price(cfg: RunConfig, out: Path) -> int:
    result = run_price(cfg, out)
    for kind, run in result.runs.items():
        print(f"{kind.value}: {len(run.timesteps)} steps, {run.total_iterations} iterations, "
              f"{run.total_wall_time:.3f}s")
    print(f"Wrote {out / 'solution.csv'} and {out / 'stats.csv'}")
    return EXIT_OK


def _cmd_penalty_sweep(cfg: RunConfig, out: Path) -> int:
    result = run_penalty_sweep(cfg, out)
    for label, slope in result.slopes.items():
        print(f"{label}: log-log slope of error vs rho = {_fmt_slope(slope)}")
    print(f"Wrote {out / 'sweep.csv'}")
    return EXIT_OK


def _cmd_iteration_stats(cfg: RunConfig, out: Path) -> int:
    frame = run_iteration_stats(cfg, out)
    print(frame.to_string(index=False))
    print(f"Wrote {out / 'iterations.csv'}")
    return EXIT_OK


def _cmd_timing(cfg: RunConfig, out: Path) -> int:
    result = run_timing(cfg, out)
    for label, by_rho in result.ratios.items():
        for rho, ratio in by_rho.items():
            print(f"{label}: penalty (rho={rho:g}) / policy runtime = {ratio:.2f}")
    print(f"Wrote {out / 'timings.csv'}")
    return EXIT_OK


def _cmd_oracle_check(cfg: RunConfig, out: Path) -> int:
    summary = run_oracle_check(cfg.seed, cfg.trials, cfg.max_iters)
    checked = summary.trials - summary.rejected
    print(f"oracle-check: {summary.passed}/{checked} passed, {summary.rejected} rejected at validation "
          f"(seed {cfg.seed})")
    if not summary.ok:
        for failure in summary.failures:
            print(failure, file=sys.stderr)
        return EXIT_ORACLE
    return EXIT_OK


COMMANDS = {
    "price": _cmd_price,
    "penalty-sweep": _cmd_penalty_sweep,
    "iteration-stats": _cmd_iteration_stats,
    "timing": _cmd_timing,
    "oracle-check": _cmd_oracle_check,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        cfg = load_run_config(args.config, args.profile, _overrides(args))
        return COMMANDS[args.command](cfg, Path(cfg.output_dir))
    except (ConfigError, ArbitrageConstraintError, FileNotFoundError) as e:
        print(f"penalty-hjb {args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except HJBError as e:
        print(f"penalty-hjb {args.command}: solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as e:
        print(f"penalty-hjb {args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
