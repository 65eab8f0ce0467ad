from abc import ABC, abstractmethod
from typing import Any, Mapping

import numpy as np

from penalty_hjb.models.models import ControlProblem, SolveReport, SolverKind


class NonlinearSolver(ABC):
    """
    Base interface for the solvers of the discrete HJB system.
    Subclasses:
      - set `kind` as a class attribute
      - register themselves with @register_solver
    """

    kind: SolverKind  # subclasses set this

    @classmethod
    @abstractmethod
    def from_config(cls, cfg: Mapping[str, Any]) -> "NonlinearSolver":
        """
        Build an instance from a flat config mapping (RunConfig keys).
        Unknown keys are ignored.
        """
        raise NotImplementedError

    @abstractmethod
    def solve(self, problem: ControlProblem, x0: np.ndarray | None = None) -> SolveReport:
        """
        Solve the problem starting from x0 (zero vector when omitted).
        """
        raise NotImplementedError
