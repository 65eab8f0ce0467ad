"""
Backward time stepping of the borrow/lend pricing problem.

Starting from V^{M-1} = payoff, every step solves

    min{A_s V^{j-1} - V^j : s in controls} = 0

with one of the registered nonlinear solvers, warm-started at V^j.
"""
from __future__ import annotations

import logging
from dataclasses import asdict
from typing import Any, List, Mapping, Sequence

import numpy as np

from penalty_hjb.core.errors import SolverCapExceededError
from penalty_hjb.core.timer import Stopwatch, timed
from penalty_hjb.linalg.banded import BandedMatrix, solve
from penalty_hjb.models.models import (
    ControlProblem,
    Grid,
    MarketParams,
    PiecewiseLinearPayoff,
    PricingRun,
    SolverKind,
)
from penalty_hjb.pricing.bs_model import (
    CONTROL_LABELS,
    bs_matrix,
    control_matrices,
    sample_payoff,
)
from penalty_hjb.solvers.solver_registry import build_solver

logger = logging.getLogger(__name__)

STABILITY_RTOL = 1e-8


def build_step_problem(matrices: Sequence[BandedMatrix], v_next: np.ndarray,
                       controls: Sequence[str] = CONTROL_LABELS) -> ControlProblem:
    """Per-step system: every control shares the right-hand side V^j."""
    return ControlProblem(tuple(controls), tuple(matrices), tuple(v_next for _ in matrices))


def _snapshot(mp: MarketParams | None, grid: Grid, solver_kind, solver_config) -> dict:
    return {
        "market": asdict(mp) if mp is not None else None,
        "grid": asdict(grid),
        "s_max": grid.s_max,
        "solver_kind": solver_kind.value if solver_kind else None,
        "solver_config": dict(solver_config or {}),
    }


@timed
def price(mp: MarketParams, grid: Grid, payoff: PiecewiseLinearPayoff,
          solver_kind: SolverKind | str, solver_config: Mapping[str, Any] | None = None,
          keep_reports: bool = False) -> PricingRun:
    solver_kind = SolverKind(solver_kind)
    cfg = {**(solver_config or {}), "keep_iterates": keep_reports}
    solver = build_solver(solver_kind, cfg)
    matrices = control_matrices(mp, grid)

    surface = np.empty((grid.M, grid.N))
    surface[grid.M - 1] = sample_payoff(payoff, grid)
    run = PricingRun(surface=surface, timesteps=[], per_step_iters=[], per_step_wall_time=[],
                     solver_kind=solver_kind, config=_snapshot(mp, grid, solver_kind, solver_config),
                     reports=[] if keep_reports else None)

    problem = build_step_problem(matrices, surface[grid.M - 1])
    for j in range(grid.M - 1, 0, -1):
        v = surface[j]
        problem = problem.with_rhs([v] * len(matrices))
        with Stopwatch() as sw:
            report = solver.solve(problem, x0=v)
        if not report.converged:
            raise SolverCapExceededError(
                f"{solver_kind.value} solver did not converge at time level {j - 1} "
                f"after {report.iterations} iterations",
                step=j - 1, report=report, partial_run=run,
            )
        surface[j - 1] = report.x
        run.timesteps.append(j - 1)
        run.per_step_iters.append(report.iterations)
        run.per_step_wall_time.append(sw.elapsed)
        if keep_reports:
            run.reports.append(report)

    logger.info("%s run on %s: %d steps, %d iterations, %.3fs",
                solver_kind.value, grid.label, len(run.timesteps), run.total_iterations,
                run.total_wall_time)
    return run


def price_linear(r: float, q: float, sigma: float, grid: Grid,
                 payoff: PiecewiseLinearPayoff) -> PricingRun:
    """Single-control backward solve A V^{j-1} = V^j."""
    m = bs_matrix((r, q), sigma, grid)
    surface = np.empty((grid.M, grid.N))
    surface[grid.M - 1] = sample_payoff(payoff, grid)
    run = PricingRun(surface=surface, timesteps=[], per_step_iters=[], per_step_wall_time=[],
                     solver_kind=None,
                     config=_snapshot(None, grid, None, {"r": r, "q": q, "sigma": sigma}))
    for j in range(grid.M - 1, 0, -1):
        with Stopwatch() as sw:
            surface[j - 1] = solve(m, surface[j])
        run.timesteps.append(j - 1)
        run.per_step_iters.append(1)
        run.per_step_wall_time.append(sw.elapsed)
    return run


def stability_check(run: PricingRun, payoff) -> bool:
    """
    True iff every time level satisfies ||V^j||_inf <= max|P| + 1e-8 * max(1, max|P|),
    with P sampled on the run's grid. `payoff` is a PiecewiseLinearPayoff or its sampled vector.
    """
    if isinstance(payoff, PiecewiseLinearPayoff):
        nodes = np.linspace(0.0, run.config["s_max"], run.surface.shape[1])
        values = payoff(nodes)
    else:
        values = np.asarray(payoff, dtype=np.float64)
    bound = float(np.max(np.abs(values)))
    limit = bound + STABILITY_RTOL * max(1.0, bound)
    level_norms = np.max(np.abs(run.surface), axis=1)
    ok = bool(np.all(level_norms <= limit))
    if not ok:
        worst = int(np.argmax(level_norms))
        logger.warning("Stability bound violated at level %d: %.12g > %.12g", worst, level_norms[worst], limit)
    return ok


def step_problems(run: PricingRun, matrices: Sequence[BandedMatrix], count: int,
                  seed: int = 0) -> List[ControlProblem]:
    """Per-step problems of randomly chosen time levels of a finished run."""
    M = run.surface.shape[0]
    rng = np.random.default_rng(seed)
    levels = rng.choice(np.arange(1, M), size=min(count, M - 1), replace=False)
    return [build_step_problem(matrices, run.surface[j].copy()) for j in sorted(levels)]
