"""
Exhaustive reference solver for small HJB systems.

Enumerates every row-wise control assignment, solves the spliced linear
system and keeps the candidates that verify. The solution is unique, so all
verifying candidates must coincide. Only meant for test-sized instances.
"""
from __future__ import annotations

import itertools
import logging

import numpy as np

from penalty_hjb.core.errors import OracleGuardError, OracleNoSolutionError, SingularPivotError
from penalty_hjb.linalg.banded import solve, splice_padded
from penalty_hjb.models.models import ControlProblem
from penalty_hjb.problem.hjb_problem import as_min_form, verify_solution

logger = logging.getLogger(__name__)

MAX_ASSIGNMENTS = 10**6
VERIFY_TOL = 1e-9
UNIQUENESS_TOL = 1e-9


def assignment_count(p: ControlProblem) -> int:
    return p.n_controls ** p.n


def enumerate_solutions(p: ControlProblem, max_assignments: int = MAX_ASSIGNMENTS):
    """Yields (assignment, x) for every assignment whose spliced solution verifies."""
    p = as_min_form(p)
    count = assignment_count(p)
    if count > max_assignments:
        raise OracleGuardError(
            f"{p.n_controls}^{p.n} = {count} assignments exceeds the limit of {max_assignments}"
        )
    L, D, U = p.stacked
    B = p.rhs_matrix
    rows = np.arange(p.n)
    for assignment in itertools.product(range(p.n_controls), repeat=p.n):
        choice = np.asarray(assignment, dtype=np.int64)
        a_star = splice_padded(L, D, U, choice, validate=False)
        try:
            x = solve(a_star, B[choice, rows])
        except SingularPivotError:
            continue
        if verify_solution(p, x, VERIFY_TOL).ok:
            yield assignment, x


def brute_force_solve(p: ControlProblem, max_assignments: int = MAX_ASSIGNMENTS) -> np.ndarray:
    solution = None
    matches = 0
    for assignment, x in enumerate_solutions(p, max_assignments):
        matches += 1
        if solution is None:
            solution = x
        elif np.max(np.abs(x - solution)) > UNIQUENESS_TOL * max(1.0, np.max(np.abs(solution))):
            logger.warning("Assignment %s verifies with a different solution", assignment)
    if solution is None:
        raise OracleNoSolutionError("No control assignment yields a verifying solution; input is ill-posed")
    logger.debug("Brute force: %d verifying assignments", matches)
    return solution
