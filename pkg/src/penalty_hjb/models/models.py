from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pandas import DataFrame

from penalty_hjb.core.errors import (
    ArbitrageConstraintError,
    DimensionMismatchError,
    MMatrixViolationError,
)
from penalty_hjb.linalg.banded import BandedMatrix, stack_padded, validate_m_matrix


class Sense(str, Enum):
    MIN = "min"
    MAX = "max"


class SolverKind(str, Enum):
    PENALTY = "penalty"
    POLICY = "policy"


class Termination(str, Enum):
    CONVERGED = "converged"
    FIXED_POINT = "fixed-point"
    CAP_EXCEEDED = "cap-exceeded"


class TerminationRule(str, Enum):
    RESIDUAL = "residual"
    STAGNATION = "stagnation"


def _frozen_vector(values, n: int | None = None, name: str = "vector") -> np.ndarray:
    arr = np.array(values, dtype=np.float64).reshape(-1)
    if n is not None and arr.shape[0] != n:
        raise DimensionMismatchError(f"{name} has length {arr.shape[0]}, expected {n}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ControlProblem:
    """
    Discrete HJB system min{A_s x - b_s : s in controls} = 0 (or max in max-sense).

    In min-sense every A_s must be an M-matrix and the rows with a strictly
    positive row sum must be the same for every control.
    """
    controls: Tuple[str, ...]
    matrices: Tuple[BandedMatrix, ...]
    rhs: Tuple[np.ndarray, ...]
    sense: Sense = Sense.MIN

    def __post_init__(self):
        controls = tuple(str(c) for c in self.controls)
        matrices = tuple(self.matrices)
        if not controls:
            raise ValueError("ControlProblem needs at least one control")
        if len(matrices) != len(controls) or len(self.rhs) != len(controls):
            raise DimensionMismatchError(
                f"{len(controls)} controls but {len(matrices)} matrices and {len(self.rhs)} right-hand sides"
            )
        n = matrices[0].n
        if any(m.n != n for m in matrices):
            raise DimensionMismatchError("All control matrices must share the same dimension")
        rhs = tuple(_frozen_vector(b, n, f"rhs[{s}]") for s, b in zip(controls, self.rhs))
        object.__setattr__(self, "controls", controls)
        object.__setattr__(self, "rhs", tuple(rhs))
        object.__setattr__(self, "sense", Sense(self.sense))
        if self.sense is Sense.MIN:
            matrices = self._checked(controls, matrices)
        object.__setattr__(self, "matrices", matrices)

    @staticmethod
    def _checked(controls, matrices) -> Tuple[BandedMatrix, ...]:
        checked = []
        for label, m in zip(controls, matrices):
            if not m.m_matrix_checked:
                result = validate_m_matrix(m)
                if not result.ok:
                    raise MMatrixViolationError(
                        f"Matrix of control '{label}' is not an M-matrix: {result.reason}", result
                    )
                m = BandedMatrix(m.lower, m.diag, m.upper, m_matrix_checked=True)
            checked.append(m)

        positive = [m.positive_row_sums() for m in checked]
        for label, p in zip(controls[1:], positive[1:]):
            if not np.array_equal(p, positive[0]):
                raise MMatrixViolationError(
                    f"Positive row sums of control '{label}' are not located as in control '{controls[0]}'"
                )
        return tuple(checked)

    @property
    def n(self) -> int:
        return self.matrices[0].n

    @property
    def n_controls(self) -> int:
        return len(self.controls)

    @cached_property
    def stacked(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Row-aligned (S, n) stacks (L, D, U) of all control matrices."""
        return stack_padded(self.matrices)

    @cached_property
    def rhs_matrix(self) -> np.ndarray:
        return np.stack(self.rhs)

    @cached_property
    def scale(self) -> float:
        """max(||max{b_s}||_inf, 1) of the min-form, the denominator of the termination tests."""
        b = -self.rhs_matrix if self.sense is Sense.MAX else self.rhs_matrix
        return max(float(np.max(np.abs(b.max(axis=0)))), 1.0)

    def apply_all(self, x: np.ndarray) -> np.ndarray:
        """(S, n) array with row s equal to A_s x - b_s."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise DimensionMismatchError(f"x has shape {x.shape}, expected ({self.n},)")
        L, D, U = self.stacked
        y = D * x
        y[:, 1:] += L[:, 1:] * x[:-1]
        y[:, :-1] += U[:, :-1] * x[1:]
        return y - self.rhs_matrix

    def with_rhs(self, rhs: Sequence[np.ndarray]) -> "ControlProblem":
        """Same controls and matrices, new right-hand sides; reuses the band stacks."""
        problem = ControlProblem(self.controls, self.matrices, tuple(rhs), self.sense)
        if "stacked" in self.__dict__:
            problem.__dict__["stacked"] = self.__dict__["stacked"]
        return problem


@dataclass(frozen=True)
class Residual:
    per_control: np.ndarray  # (S, n)
    min_envelope: np.ndarray  # (n,)


@dataclass
class SolveReport:
    x: np.ndarray
    iterations: int
    termination: Termination
    method: SolverKind
    residual_trace: List[float] = field(default_factory=list)
    iterates: List[np.ndarray] = field(default_factory=list)
    policies: List[np.ndarray] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.termination is not Termination.CAP_EXCEEDED


@dataclass(frozen=True)
class MarketParams:
    r_b: float = 0.15
    r_l: float = 0.1
    r_f: float = 0.08
    sigma: float = 0.4

    def __post_init__(self):
        if not (self.r_b >= self.r_l >= self.r_f >= 0.0):
            raise ArbitrageConstraintError(
                f"Rates must satisfy r_b >= r_l >= r_f >= 0, got "
                f"r_b={self.r_b}, r_l={self.r_l}, r_f={self.r_f}"
            )
        if not self.sigma > 0.0:
            raise ArbitrageConstraintError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class Grid:
    s_max: float = 600.0
    T: float = 1.0
    M: int = 400
    N: int = 400

    def __post_init__(self):
        if self.M < 2:
            raise ValueError(f"Grid needs M >= 2 time levels, got {self.M}")
        if self.N < 2:
            raise ValueError(f"Grid needs N >= 2 space nodes, got {self.N}")
        if not (self.s_max > 0 and self.T > 0):
            raise ValueError(f"Grid needs s_max > 0 and T > 0, got s_max={self.s_max}, T={self.T}")

    @property
    def k(self) -> float:
        return self.T / (self.M - 1)

    @property
    def h(self) -> float:
        return self.s_max / (self.N - 1)

    @property
    def space_nodes(self) -> np.ndarray:
        return np.arange(self.N) * self.h

    @property
    def label(self) -> str:
        return f"{self.M}x{self.N}"


@dataclass(frozen=True)
class PiecewiseLinearPayoff:
    """Linear interpolation between breakpoints, constant beyond the end points."""
    breakpoints: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        points = tuple((float(s), float(p)) for s, p in self.breakpoints)
        if not points:
            raise ValueError("Payoff needs at least one breakpoint")
        xs = np.array([s for s, _ in points])
        if np.any(np.diff(xs) <= 0):
            raise ValueError(f"Payoff breakpoints must be strictly increasing in S, got {xs.tolist()}")
        object.__setattr__(self, "breakpoints", points)

    def __call__(self, s):
        xs = [b[0] for b in self.breakpoints]
        ps = [b[1] for b in self.breakpoints]
        return np.interp(s, xs, ps)


@dataclass
class PricingRun:
    surface: np.ndarray  # (M, N); row j holds V^j
    timesteps: List[int]  # time level solved at each step (M-2 down to 0)
    per_step_iters: List[int]
    per_step_wall_time: List[float]
    solver_kind: SolverKind | None
    config: Dict[str, Any] = field(default_factory=dict)
    reports: Optional[List[SolveReport]] = None

    @property
    def time_zero(self) -> np.ndarray:
        return self.surface[0]

    @property
    def total_wall_time(self) -> float:
        return float(sum(self.per_step_wall_time))

    @property
    def total_iterations(self) -> int:
        return int(sum(self.per_step_iters))

    def stats_frame(self) -> DataFrame:
        method = self.solver_kind.value if self.solver_kind else "linear"
        return DataFrame({
            "timestep": self.timesteps,
            "method": [method] * len(self.timesteps),
            "iterations": self.per_step_iters,
            "wall_time_seconds": self.per_step_wall_time,
        })
