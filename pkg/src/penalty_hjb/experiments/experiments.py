"""
Experiment drivers behind the CLI subcommands.

Each driver returns pandas frames (and a small result object where a summary
is printed) and writes its CSV files only after every run has finished.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import statsmodels.api as sm

from penalty_hjb.core.errors import (
    ConfigError,
    MMatrixViolationError,
    OracleNoSolutionError,
)
from penalty_hjb.experiments.config_builder import RunConfig
from penalty_hjb.experiments.random_problems import RandomInstance, random_instance
from penalty_hjb.models.models import Grid, MarketParams, PiecewiseLinearPayoff, PricingRun, SolverKind
from penalty_hjb.pricing.timestepper import price
from penalty_hjb.problem.bruteforce_oracle import brute_force_solve
from penalty_hjb.solvers.penalty_solver import PenaltyConfig, solve_penalised
from penalty_hjb.solvers.policy_solver import solve_policy

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
DEFAULT_STATS_GRIDS = ("400x400", "1000x1000", "900x30", "30x900")
ORACLE_RHO = 1e8
ORACLE_TOL = 1e-5


def write_csv(df: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.info("Wrote %d rows to %s", len(df), path)
    return path


@dataclass(frozen=True)
class PriceJob:
    mp: MarketParams
    grid: Grid
    payoff: PiecewiseLinearPayoff
    kind: SolverKind
    solver_config: Dict = field(default_factory=dict)


def _run_job(job: PriceJob) -> PricingRun:
    return price(job.mp, job.grid, job.payoff, job.kind, job.solver_config)


def run_jobs(jobs: Sequence[PriceJob], n_jobs: int = 1) -> List[PricingRun]:
    """Runs independent pricing jobs, in a process pool when n_jobs > 1; results keep job order."""
    if n_jobs <= 1 or len(jobs) <= 1:
        return [_run_job(job) for job in jobs]
    max_workers = min(n_jobs, len(jobs), os.cpu_count() or 1)
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        futures = [pool.submit(_run_job, job) for job in jobs]
        return [f.result() for f in futures]


def _policy_job(cfg: RunConfig, grid: Grid) -> PriceJob:
    return PriceJob(cfg.market, grid, cfg.payoff_fn, SolverKind.POLICY, cfg.solver_config(SolverKind.POLICY))


def _penalty_job(cfg: RunConfig, grid: Grid, rho: float) -> PriceJob:
    return PriceJob(cfg.market, grid, cfg.payoff_fn, SolverKind.PENALTY,
                    cfg.solver_config(SolverKind.PENALTY, rho))


# ---------------------------------------------------------------------------
# price
# ---------------------------------------------------------------------------
@dataclass
class PriceResult:
    runs: Dict[SolverKind, PricingRun]
    solution: pd.DataFrame
    stats: pd.DataFrame


def run_price(cfg: RunConfig, output_dir: Path | None = None) -> PriceResult:
    grid = cfg.grid
    jobs = [_penalty_job(cfg, grid, cfg.rho) if kind is SolverKind.PENALTY else _policy_job(cfg, grid)
            for kind in cfg.methods]
    runs = dict(zip(cfg.methods, run_jobs(jobs, cfg.jobs)))

    # with both methods the penalty solution is the one written out
    primary = runs[cfg.methods[0]]
    solution = pd.DataFrame({"S": grid.space_nodes, "V": primary.time_zero})
    stats = pd.concat([run.stats_frame() for run in runs.values()], ignore_index=True)
    stats = stats.sort_values(["timestep", "method"], ascending=[False, True], kind="stable",
                              ignore_index=True)

    if output_dir is not None:
        write_csv(solution, output_dir / "solution.csv")
        write_csv(stats, output_dir / "stats.csv")
    return PriceResult(runs=runs, solution=solution, stats=stats)


# ---------------------------------------------------------------------------
# penalty-sweep
# ---------------------------------------------------------------------------
def log_log_slope(rhos: Sequence[float], errors: Sequence[float]) -> Optional[float]:
    """OLS slope of log(error) against log(rho); None when it is not defined."""
    rhos = np.asarray(rhos, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    if rhos.size < 2 or np.any(errors <= 0) or np.unique(rhos).size < 2:
        return None
    X = sm.add_constant(np.log(rhos))
    model = sm.OLS(np.log(errors), X).fit()
    return float(model.params[1])


@dataclass
class SweepResult:
    frame: pd.DataFrame
    slopes: Dict[str, Optional[float]]


def run_penalty_sweep(cfg: RunConfig, output_dir: Path | None = None) -> SweepResult:
    if not cfg.rho_list:
        raise ConfigError("needs at least one penalty parameter", field="rho_list")
    rhos = sorted(cfg.rho_list)
    labels = list(cfg.grid_list) or [cfg.grid.label]
    grids = [cfg.grid_for(label) for label in labels]

    jobs: List[PriceJob] = []
    for grid in grids:
        jobs.append(_policy_job(cfg, grid))
        jobs.extend(_penalty_job(cfg, grid, rho) for rho in rhos)
    runs = run_jobs(jobs, cfg.jobs)

    rows = []
    slopes: Dict[str, Optional[float]] = {}
    per_grid = len(rhos) + 1
    for g, label in enumerate(labels):
        reference, *penalised = runs[g * per_grid:(g + 1) * per_grid]
        errors = [float(np.max(np.abs(run.time_zero - reference.time_zero))) for run in penalised]
        rows.extend({"grid": label, "rho": rho, "error_inf": err} for rho, err in zip(rhos, errors))
        slopes[label] = log_log_slope(rhos, errors)
        logger.info("Penalty sweep on %s: slope %s", label, slopes[label])

    frame = pd.DataFrame(rows, columns=["grid", "rho", "error_inf"])
    if not cfg.grid_list:
        frame = frame.drop(columns="grid")
    if output_dir is not None:
        write_csv(frame, output_dir / "sweep.csv")
    return SweepResult(frame=frame, slopes=slopes)


# ---------------------------------------------------------------------------
# iteration-stats
# ---------------------------------------------------------------------------
def iteration_histogram(run: PricingRun) -> pd.DataFrame:
    """Share of time steps (in percent, two decimals) per iteration count."""
    counts = pd.Series(run.per_step_iters).value_counts().sort_index()
    percent = counts / len(run.per_step_iters) * 100.0
    return pd.DataFrame({"n": counts.index.astype(int), "percent": [f"{p:.2f}" for p in percent]})


def run_iteration_stats(cfg: RunConfig, output_dir: Path | None = None) -> pd.DataFrame:
    labels = list(cfg.grid_list) or list(DEFAULT_STATS_GRIDS)
    jobs: List[PriceJob] = []
    keys = []
    for label in labels:
        grid = cfg.grid_for(label)
        jobs.append(_policy_job(cfg, grid))
        keys.append((label, "policy", ""))
        for rho in cfg.stats_rho_list:
            jobs.append(_penalty_job(cfg, grid, rho))
            keys.append((label, "penalty", FLOAT_FORMAT % rho))
    runs = run_jobs(jobs, cfg.jobs)

    frames = []
    for (label, method, rho), run in zip(keys, runs):
        hist = iteration_histogram(run)
        hist.insert(0, "rho", rho)
        hist.insert(0, "method", method)
        hist.insert(0, "grid", label)
        frames.append(hist)
    frame = pd.concat(frames, ignore_index=True)[["grid", "method", "rho", "n", "percent"]]
    if output_dir is not None:
        write_csv(frame, output_dir / "iterations.csv")
    return frame


# ---------------------------------------------------------------------------
# timing
# ---------------------------------------------------------------------------
@dataclass
class TimingResult:
    frame: pd.DataFrame
    ratios: Dict[str, Dict[float, float]]


def run_timing(cfg: RunConfig, output_dir: Path | None = None) -> TimingResult:
    """Sequential on purpose: wall times of concurrent runs are not comparable."""
    labels = list(cfg.grid_list) or [cfg.grid.label]
    rows = []
    ratios: Dict[str, Dict[float, float]] = {}
    for label in labels:
        grid = cfg.grid_for(label)
        policy = _run_job(_policy_job(cfg, grid))
        rows.append({"grid": label, "method": "policy", "rho": "",
                     "wall_time_seconds": policy.total_wall_time,
                     "total_iterations": policy.total_iterations})
        ratios[label] = {}
        for rho in cfg.stats_rho_list:
            penalty = _run_job(_penalty_job(cfg, grid, rho))
            rows.append({"grid": label, "method": "penalty", "rho": FLOAT_FORMAT % rho,
                         "wall_time_seconds": penalty.total_wall_time,
                         "total_iterations": penalty.total_iterations})
            ratios[label][rho] = penalty.total_wall_time / max(policy.total_wall_time, 1e-12)
    frame = pd.DataFrame(rows, columns=["grid", "method", "rho", "wall_time_seconds", "total_iterations"])
    if output_dir is not None:
        write_csv(frame, output_dir / "timings.csv")
    return TimingResult(frame=frame, ratios=ratios)


# ---------------------------------------------------------------------------
# oracle-check
# ---------------------------------------------------------------------------
@dataclass
class OracleSummary:
    trials: int
    passed: int = 0
    rejected: int = 0
    failures: List[str] = field(default_factory=list)

    @property
    def failed(self) -> int:
        return len(self.failures)

    @property
    def ok(self) -> bool:
        return not self.failures


def check_instance(inst: RandomInstance, max_iters: int = 100) -> Optional[str]:
    """None when both solvers reproduce the brute-force solution, otherwise a description."""
    problem = inst.to_problem()
    try:
        reference = brute_force_solve(problem)
    except OracleNoSolutionError as e:
        return f"brute force found no solution: {e}"

    penalty = solve_penalised(problem, PenaltyConfig(rho=ORACLE_RHO, max_iters=max_iters, keep_iterates=False))
    policy = solve_policy(problem, max_iters=max_iters, keep_iterates=False)
    problems = []
    for name, report in (("penalty", penalty), ("policy", policy)):
        err = float(np.max(np.abs(report.x - reference)))
        if not report.converged or err > ORACLE_TOL:
            problems.append(f"{name}: {report.termination.value} after {report.iterations} "
                            f"iterations, error {err:.3e}")
    return "; ".join(problems) or None


def run_oracle_check(seed: int, trials: int, max_iters: int = 100,
                     instance_factory: Callable[[np.random.Generator], RandomInstance] = random_instance,
                     ) -> OracleSummary:
    if trials < 1:
        raise ConfigError(f"must be at least 1, got {trials}", field="trials")
    rng = np.random.default_rng(seed)
    summary = OracleSummary(trials=trials)
    for trial in range(trials):
        inst = instance_factory(rng)
        try:
            failure = check_instance(inst, max_iters)
        except MMatrixViolationError as e:
            summary.rejected += 1
            logger.info("Trial %d rejected at validation: %s", trial, e)
            continue
        if failure is None:
            summary.passed += 1
        else:
            summary.failures.append(f"trial {trial} (seed {seed}): {failure}\n{inst.describe()}")
            logger.warning("Trial %d mismatch: %s", trial, failure)
    return summary
