"""
Random small HJB instances for cross-checking the solvers against brute force.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from penalty_hjb.linalg.banded import BandedMatrix
from penalty_hjb.models.models import ControlProblem

MAX_NODES = 6
MAX_CONTROLS = 3


@dataclass(frozen=True)
class RandomInstance:
    """Raw instance data; validation happens in to_problem()."""
    matrices: Tuple[BandedMatrix, ...]
    rhs: Tuple[np.ndarray, ...]

    @property
    def controls(self) -> Tuple[str, ...]:
        return tuple(f"s{i}" for i in range(len(self.matrices)))

    def to_problem(self) -> ControlProblem:
        return ControlProblem(self.controls, self.matrices, self.rhs)

    def describe(self) -> str:
        """Full instance data, enough to rebuild it by hand."""
        lines = []
        for label, m, b in zip(self.controls, self.matrices, self.rhs):
            lines.append(f"  {label}: lower={np.array2string(m.lower, precision=17, separator=', ')}")
            lines.append(f"      diag={np.array2string(m.diag, precision=17, separator=', ')}")
            lines.append(f"      upper={np.array2string(m.upper, precision=17, separator=', ')}")
            lines.append(f"      b={np.array2string(b, precision=17, separator=', ')}")
        return "\n".join(lines)


def random_m_matrix(rng: np.random.Generator, n: int) -> BandedMatrix:
    """Strictly diagonally dominant tridiagonal M-matrix: every row sum lies in [0.1, 1)."""
    lower = -rng.uniform(0.0, 1.0, n - 1)
    upper = -rng.uniform(0.0, 1.0, n - 1)
    diag = rng.uniform(0.1, 1.0, n)
    diag[1:] -= lower
    diag[:-1] -= upper
    return BandedMatrix(lower, diag, upper)


def random_instance(rng: np.random.Generator, max_nodes: int = MAX_NODES,
                    max_controls: int = MAX_CONTROLS) -> RandomInstance:
    n = int(rng.integers(2, max_nodes + 1))
    n_controls = int(rng.integers(1, max_controls + 1))
    matrices = tuple(random_m_matrix(rng, n) for _ in range(n_controls))
    rhs = tuple(rng.uniform(-1.0, 1.0, n) for _ in range(n_controls))
    return RandomInstance(matrices, rhs)


def non_m_matrix_instance(rng: np.random.Generator) -> RandomInstance:
    """A random instance whose first control has a positive off-diagonal entry."""
    inst = random_instance(rng)
    bad = inst.matrices[0]
    upper = bad.upper.copy()
    upper[0] = 0.5
    matrices = (BandedMatrix(bad.lower, bad.diag, upper),) + inst.matrices[1:]
    return RandomInstance(matrices, inst.rhs)
