"""
Residuals and solution checks for the discrete HJB system

    min{A_s x - b_s : s in S} = 0

Max-form problems are handled through the min-form of their negation
(A_s -> -A_s, b_s -> -b_s), which has the same solution.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from penalty_hjb.models.models import ControlProblem, Residual, Sense

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Verification:
    ok: bool
    worst_row: int
    worst_control: str
    worst_value: float  # scaled residual of the worst (row, control)
    reason: str

    def __bool__(self) -> bool:
        return self.ok


def min_form_values(p: ControlProblem, x) -> np.ndarray:
    """(S, n) values of A_s x - b_s for the min-form of p."""
    values = p.apply_all(x)
    return -values if p.sense is Sense.MAX else values


def residual(p: ControlProblem, x) -> Residual:
    per_control = min_form_values(p, x)
    return Residual(per_control=per_control, min_envelope=per_control.min(axis=0))


def constraint_violation(p: ControlProblem, x) -> float:
    """||min{A_s x - b_s}||_inf, zero exactly at the solution."""
    return float(np.max(np.abs(residual(p, x).min_envelope)))


def verify_solution(p: ControlProblem, x, tol: float) -> Verification:
    """
    Two-sided scaled check: every (A_s x - b_s)_i / scale >= -tol, and every
    row has some control with (A_r x - b_r)_i / scale <= tol.
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    values = min_form_values(p, x) / p.scale

    s_low, i_low = np.unravel_index(int(np.argmin(values)), values.shape)
    lowest = float(values[s_low, i_low])
    if lowest < -tol:
        return Verification(False, int(i_low), p.controls[s_low], lowest,
                            f"row {i_low} control '{p.controls[s_low]}' below -tol")

    envelope = values.min(axis=0)
    i_high = int(np.argmax(envelope))
    s_high = int(np.argmin(values[:, i_high]))
    highest = float(envelope[i_high])
    if highest > tol:
        return Verification(False, i_high, p.controls[s_high], highest,
                            f"row {i_high} has no control within tol")

    if abs(lowest) >= abs(highest):
        return Verification(True, int(i_low), p.controls[s_low], lowest, "ok")
    return Verification(True, i_high, p.controls[s_high], highest, "ok")


def negate_to_min_form(p: ControlProblem) -> ControlProblem:
    """Max-sense problem -> min-sense problem with -A_s and -b_s."""
    if p.sense is not Sense.MAX:
        raise ValueError("negate_to_min_form expects a max-sense problem")
    return ControlProblem(
        controls=p.controls,
        matrices=tuple(-m for m in p.matrices),
        rhs=tuple(-b for b in p.rhs),
        sense=Sense.MIN,
    )


def as_min_form(p: ControlProblem) -> ControlProblem:
    return negate_to_min_form(p) if p.sense is Sense.MAX else p
