"""
Penalty approximation of the discrete HJB system and its finite-termination solver.

The penalised system for a reference control s0 and penalty rho > 0 is

    G(x) = (A_s0 x - b_s0) - rho * sum_{s != s0} max(b_s - A_s x, 0) = 0.

Each iteration freezes the rows where b_s - A_s x^n > 0 (the masks) and solves

    (A_s0 + rho * sum_s A_s^masked) x^{n+1} = b_s0 + rho * sum_s b_s^masked,

a tridiagonal M-matrix system. Iterates increase monotonically from n = 1 on and
the masks can only take finitely many values, so the scheme reaches an exact
fixed point in finitely many steps.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from penalty_hjb.core.errors import DimensionMismatchError
from penalty_hjb.linalg.banded import BandedMatrix, solve
from penalty_hjb.models.models import (
    ControlProblem,
    SolveReport,
    SolverKind,
    Termination,
    TerminationRule,
)
from penalty_hjb.problem.hjb_problem import as_min_form
from penalty_hjb.solvers.nonlinear_solver import NonlinearSolver
from penalty_hjb.solvers.solver_registry import register_solver

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PenaltyConfig:
    rho: float = 1e4
    reference_control: int = 0
    tol: float = 1e-8
    max_iters: int = 100
    strict_mask: bool = True
    termination: TerminationRule = TerminationRule.RESIDUAL
    keep_iterates: bool = True

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be at least 1, got {self.max_iters}")
        object.__setattr__(self, "termination", TerminationRule(self.termination))

    def reference_for(self, p: ControlProblem) -> int:
        if not 0 <= self.reference_control < p.n_controls:
            raise ValueError(
                f"reference_control {self.reference_control} is not a valid index for "
                f"{p.n_controls} controls"
            )
        return self.reference_control


@dataclass
class PenaltyIterate:
    x: np.ndarray
    masks: np.ndarray  # (S, n); masks[s0] is always False
    g_residual: np.ndarray
    iter: int


def _check_dim(p: ControlProblem, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (p.n,):
        raise DimensionMismatchError(f"x has shape {x.shape}, expected ({p.n},)")
    return x


def _masks_from_values(values: np.ndarray, ref: int, strict: bool) -> np.ndarray:
    # values holds A_s x - b_s; the penalty is active where b_s - A_s x > 0
    masks = values < 0 if strict else values <= 0
    masks[ref] = False
    return masks


def _g_from_values(values: np.ndarray, ref: int, rho: float) -> np.ndarray:
    violation = np.maximum(-values, 0.0)
    violation[ref] = 0.0
    return values[ref] - rho * violation.sum(axis=0)


def compute_masks(p: ControlProblem, cfg: PenaltyConfig, x) -> np.ndarray:
    x = _check_dim(p, x)
    return _masks_from_values(p.apply_all(x), cfg.reference_for(p), cfg.strict_mask)


def penalty_residual(p: ControlProblem, cfg: PenaltyConfig, x) -> np.ndarray:
    """G(x) for the penalised system."""
    x = _check_dim(p, x)
    return _g_from_values(p.apply_all(x), cfg.reference_for(p), cfg.rho)


def build_jacobian(p: ControlProblem, cfg: PenaltyConfig, masks: np.ndarray) -> BandedMatrix:
    """A_s0 + rho * sum_{s != s0} A_s^masked."""
    ref = cfg.reference_for(p)
    masks = np.asarray(masks, dtype=bool)
    if masks.shape != (p.n_controls, p.n):
        raise DimensionMismatchError(f"masks have shape {masks.shape}, expected {(p.n_controls, p.n)}")
    weights = cfg.rho * masks
    weights[ref] = 1.0
    L, D, U = p.stacked
    return BandedMatrix.from_padded((weights * L).sum(axis=0),
                                    (weights * D).sum(axis=0),
                                    (weights * U).sum(axis=0))


def masked_rhs(p: ControlProblem, cfg: PenaltyConfig, masks: np.ndarray) -> np.ndarray:
    """b_s0 + rho * sum_{s != s0} b_s^masked."""
    ref = cfg.reference_for(p)
    weights = cfg.rho * np.asarray(masks, dtype=bool)
    weights[ref] = 1.0
    return (weights * p.rhs_matrix).sum(axis=0)


def _step(p: ControlProblem, cfg: PenaltyConfig, masks: np.ndarray, n: int) -> PenaltyIterate:
    ref = cfg.reference_for(p)
    x = solve(build_jacobian(p, cfg, masks), masked_rhs(p, cfg, masks))
    values = p.apply_all(x)
    return PenaltyIterate(
        x=x,
        masks=_masks_from_values(values, ref, cfg.strict_mask),
        g_residual=_g_from_values(values, ref, cfg.rho),
        iter=n,
    )


def iterate(p: ControlProblem, cfg: PenaltyConfig, x_prev, n: int = 0) -> PenaltyIterate:
    """One step: masks from x_prev, Jacobian solve, residual of the new iterate."""
    return _step(p, cfg, compute_masks(p, cfg, x_prev), n + 1)


def reference_slack(p: ControlProblem, cfg: PenaltyConfig, x) -> float:
    """min_i (A_s0 x - b_s0)_i; non-negative at the penalised solution."""
    x = _check_dim(p, x)
    return float(np.min(p.apply_all(x)[cfg.reference_for(p)]))


def solve_penalised(p: ControlProblem, cfg: PenaltyConfig, x0=None) -> SolveReport:
    p = as_min_form(p)
    x = np.zeros(p.n) if x0 is None else _check_dim(p, x0).copy()
    masks = compute_masks(p, cfg, x)
    scale = p.scale

    report = SolveReport(x=x, iterations=0, termination=Termination.CAP_EXCEEDED,
                         method=SolverKind.PENALTY)
    if cfg.keep_iterates:
        report.iterates.append(x)

    for n in range(1, cfg.max_iters + 1):
        step = _step(p, cfg, masks, n)
        g_norm = float(np.max(np.abs(step.g_residual))) / scale
        report.residual_trace.append(g_norm)
        report.iterations = n
        if cfg.keep_iterates:
            report.iterates.append(step.x)
        logger.debug("penalty iter %d: |G|/scale=%.3e, active rows=%d", n, g_norm, int(step.masks.sum()))

        if cfg.termination is TerminationRule.RESIDUAL:
            if g_norm <= cfg.tol:
                report.termination = Termination.CONVERGED
            elif np.array_equal(step.masks, masks):
                report.termination = Termination.FIXED_POINT
        elif float(np.max(np.abs(step.x - x))) / scale <= cfg.tol:
            report.termination = Termination.CONVERGED

        x, masks = step.x, step.masks
        if report.converged:
            break
    else:
        logger.warning("Penalty iteration hit max_iters=%d (last |G|/scale=%.3e)",
                       cfg.max_iters, report.residual_trace[-1])

    report.x = x
    return report


@register_solver("penalty")
class PenaltySolver(NonlinearSolver):
    kind = SolverKind.PENALTY

    def __init__(self, config: PenaltyConfig | None = None):
        self.config = config or PenaltyConfig()

    @classmethod
    def from_config(cls, cfg: Mapping[str, Any]) -> "PenaltySolver":
        defaults = PenaltyConfig()
        return cls(PenaltyConfig(
            rho=float(cfg.get("rho", defaults.rho)),
            reference_control=int(cfg.get("reference_control", defaults.reference_control)),
            tol=float(cfg.get("tol", defaults.tol)),
            max_iters=int(cfg.get("max_iters", defaults.max_iters)),
            strict_mask=bool(cfg.get("strict_mask", defaults.strict_mask)),
            termination=cfg.get("termination", defaults.termination),
            keep_iterates=bool(cfg.get("keep_iterates", defaults.keep_iterates)),
        ))

    def solve(self, problem: ControlProblem, x0: np.ndarray | None = None) -> SolveReport:
        return solve_penalised(problem, self.config, x0)
