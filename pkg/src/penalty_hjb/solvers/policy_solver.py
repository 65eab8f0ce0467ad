"""
Policy iteration (Howard's method) for the discrete HJB system.

Each iteration picks, row by row, the control minimising (A_s x^n - b_s)_i,
splices those rows into A* and b*, and solves A* x^{n+1} = b*. On the implicit
Black-Scholes time step A_s = I + k * L_s with b_s = V^j, so this is the
classical scheme for (I + k L^{policy}) x = V^j.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from penalty_hjb.core.errors import DimensionMismatchError
from penalty_hjb.linalg.banded import solve, splice_padded
from penalty_hjb.models.models import (
    ControlProblem,
    SolveReport,
    SolverKind,
    Termination,
    TerminationRule,
)
from penalty_hjb.problem.hjb_problem import as_min_form, verify_solution
from penalty_hjb.solvers.nonlinear_solver import NonlinearSolver
from penalty_hjb.solvers.solver_registry import register_solver

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PolicyConfig:
    tol: float = 1e-8
    max_iters: int = 100
    termination: TerminationRule = TerminationRule.RESIDUAL
    keep_iterates: bool = True

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be at least 1, got {self.max_iters}")
        object.__setattr__(self, "termination", TerminationRule(self.termination))


@dataclass
class PolicyIterate:
    x: np.ndarray
    policy: np.ndarray  # control index per row that produced x
    iter: int


def select_policy(p: ControlProblem, x) -> np.ndarray:
    """Lowest-index control minimising (A_s x - b_s)_i in every row."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (p.n,):
        raise DimensionMismatchError(f"x has shape {x.shape}, expected ({p.n},)")
    return np.argmin(p.apply_all(x), axis=0)


def policy_step(p: ControlProblem, policy: np.ndarray, n: int = 1) -> PolicyIterate:
    L, D, U = p.stacked
    rows = np.arange(p.n)
    a_star = splice_padded(L, D, U, policy, validate=False)
    x = solve(a_star, p.rhs_matrix[policy, rows])
    return PolicyIterate(x=x, policy=policy, iter=n)


def solve_policy(p: ControlProblem, tol: float = 1e-8, max_iters: int = 100, x0=None,
                 termination: TerminationRule = TerminationRule.RESIDUAL,
                 keep_iterates: bool = True) -> SolveReport:
    p = as_min_form(p)
    termination = TerminationRule(termination)
    x = np.zeros(p.n) if x0 is None else np.asarray(x0, dtype=np.float64).copy()
    policy = select_policy(p, x)
    scale = p.scale

    report = SolveReport(x=x, iterations=0, termination=Termination.CAP_EXCEEDED,
                         method=SolverKind.POLICY)
    if keep_iterates:
        report.iterates.append(x)

    for n in range(1, max_iters + 1):
        step = policy_step(p, policy, n)
        check = verify_solution(p, step.x, tol)
        next_policy = select_policy(p, step.x)
        report.iterations = n
        report.residual_trace.append(abs(check.worst_value))
        if keep_iterates:
            report.iterates.append(step.x)
            report.policies.append(step.policy)
        logger.debug("policy iter %d: worst scaled residual %.3e (%s)", n, check.worst_value, check.reason)

        if termination is TerminationRule.RESIDUAL:
            if check.ok:
                report.termination = Termination.CONVERGED
            elif np.array_equal(next_policy, policy):
                report.termination = Termination.FIXED_POINT
        elif float(np.max(np.abs(step.x - x))) / scale <= tol:
            report.termination = Termination.CONVERGED

        x, policy = step.x, next_policy
        if report.converged:
            break
    else:
        logger.warning("Policy iteration hit max_iters=%d", max_iters)

    report.x = x
    return report


@register_solver("policy")
class PolicySolver(NonlinearSolver):
    kind = SolverKind.POLICY

    def __init__(self, config: PolicyConfig | None = None):
        self.config = config or PolicyConfig()

    @classmethod
    def from_config(cls, cfg: Mapping[str, Any]) -> "PolicySolver":
        defaults = PolicyConfig()
        return cls(PolicyConfig(
            tol=float(cfg.get("tol", defaults.tol)),
            max_iters=int(cfg.get("max_iters", defaults.max_iters)),
            termination=cfg.get("termination", defaults.termination),
            keep_iterates=bool(cfg.get("keep_iterates", defaults.keep_iterates)),
        ))

    def solve(self, problem: ControlProblem, x0: np.ndarray | None = None) -> SolveReport:
        c = self.config
        return solve_policy(problem, c.tol, c.max_iters, x0, c.termination, c.keep_iterates)
