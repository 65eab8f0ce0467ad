"""
Tridiagonal matrix storage, M-matrix validation and direct solves.

Every matrix in the solvers is tridiagonal: the Black-Scholes operators, the
row-spliced policy matrices and the penalty Jacobians. Storage is three
float64 arrays; solves run through the numba Thomas kernel in
`penalty_hjb.linalg.thomas`.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from penalty_hjb.core.errors import DimensionMismatchError, SingularPivotError
from penalty_hjb.linalg.thomas import thomas_solve

logger = logging.getLogger(__name__)

PIVOT_RTOL = 1e-14
ROW_SUM_RTOL = 1e-14


def _frozen(values, length: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64).reshape(-1)
    if arr.shape[0] != length:
        raise DimensionMismatchError(f"{name} has length {arr.shape[0]}, expected {length}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class BandedMatrix:
    """
    n x n tridiagonal matrix.

    lower[i-1] is the entry (i, i-1), upper[i] is the entry (i, i+1).
    Instances are immutable; `m_matrix_checked` is set only by code that ran
    `validate_m_matrix` on the instance.
    """
    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    m_matrix_checked: bool = False

    def __post_init__(self):
        diag = np.array(self.diag, dtype=np.float64).reshape(-1)
        n = diag.shape[0]
        if n < 1:
            raise DimensionMismatchError("BandedMatrix needs n >= 1")
        object.__setattr__(self, "diag", _frozen(diag, n, "diag"))
        object.__setattr__(self, "lower", _frozen(self.lower, n - 1, "lower"))
        object.__setattr__(self, "upper", _frozen(self.upper, n - 1, "upper"))

    @property
    def n(self) -> int:
        return self.diag.shape[0]

    @classmethod
    def identity(cls, n: int) -> "BandedMatrix":
        return cls(np.zeros(n - 1), np.ones(n), np.zeros(n - 1))

    @classmethod
    def from_padded(cls, L: np.ndarray, D: np.ndarray, U: np.ndarray,
                    m_matrix_checked: bool = False) -> "BandedMatrix":
        """Inverse of `padded`: L[0] and U[-1] are ignored."""
        return cls(L[1:], D, U[:-1], m_matrix_checked=m_matrix_checked)

    @classmethod
    def from_dense(cls, a) -> "BandedMatrix":
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatchError(f"Expected a square matrix, got shape {a.shape}")
        if np.any(np.triu(a, 2)) or np.any(np.tril(a, -2)):
            raise ValueError("Matrix has entries outside the tridiagonal band")
        return cls(np.diag(a, -1), np.diag(a), np.diag(a, 1))

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.lower, -1) + np.diag(self.upper, 1)

    def padded(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Row-aligned copies (L, D, U), each of length n, with L[0] = U[-1] = 0."""
        L = np.zeros(self.n)
        U = np.zeros(self.n)
        L[1:] = self.lower
        U[:-1] = self.upper
        return L, self.diag.copy(), U

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise DimensionMismatchError(f"Vector has shape {x.shape}, expected ({self.n},)")
        y = self.diag * x
        y[1:] += self.lower * x[:-1]
        y[:-1] += self.upper * x[1:]
        return y

    def row_sums(self) -> np.ndarray:
        s = self.diag.copy()
        s[1:] += self.lower
        s[:-1] += self.upper
        return s

    def positive_row_sums(self) -> np.ndarray:
        return self.row_sums() > _row_sum_atol(self)

    def __neg__(self) -> "BandedMatrix":
        return BandedMatrix(-self.lower, -self.diag, -self.upper)


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    condition: str | None = None
    row: int | None = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


OK = ValidationResult(ok=True, reason="ok")


def _row_sum_atol(m: BandedMatrix) -> float:
    return ROW_SUM_RTOL * max(1.0, float(np.max(np.abs(m.diag))))


def validate_m_matrix(m: BandedMatrix) -> ValidationResult:
    """
    Structural M-matrix test: off-diagonals <= 0, diagonal > 0, row sums >= 0,
    at least one row sum > 0. Reports the first offending row.
    """
    L, D, U = m.padded()
    sums = m.row_sums()
    atol = _row_sum_atol(m)

    checks = (
        ("off-diagonal", (L > 0) | (U > 0), "positive off-diagonal entry"),
        ("diagonal", D <= 0, "non-positive diagonal entry"),
        ("row-sum", sums < -atol, "negative row sum"),
    )
    bad_rows = np.zeros(m.n, dtype=bool)
    for _, mask, _ in checks:
        bad_rows |= mask
    if bad_rows.any():
        row = int(np.argmax(bad_rows))
        for condition, mask, text in checks:
            if mask[row]:
                return ValidationResult(False, condition, row, f"{text} in row {row}")

    if not np.any(sums > atol):
        return ValidationResult(False, "no-positive-row-sum", None, "no positive row sum")
    return OK


def solve(m: BandedMatrix, rhs) -> np.ndarray:
    """Direct tridiagonal solve without pivoting."""
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape != (m.n,):
        raise DimensionMismatchError(f"rhs has shape {rhs.shape}, expected ({m.n},)")
    threshold = max(PIVOT_RTOL * float(np.max(np.abs(m.diag))), np.finfo(np.float64).tiny)
    x, bad_row, pivot = thomas_solve(m.lower, m.diag, m.upper, rhs, threshold)
    if bad_row >= 0:
        raise SingularPivotError(int(bad_row), float(pivot), threshold)
    return x


def stack_padded(matrices: Sequence[BandedMatrix]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(S, n) row-aligned stacks of the lower, diagonal and upper bands."""
    n = matrices[0].n
    if any(m.n != n for m in matrices):
        raise DimensionMismatchError("All matrices must share the same dimension")
    bands = [m.padded() for m in matrices]
    return tuple(np.stack([b[k] for b in bands]) for k in range(3))


def splice_padded(L: np.ndarray, D: np.ndarray, U: np.ndarray, choice: np.ndarray,
                  validate: bool = True) -> BandedMatrix:
    """Row i of the result is row i of matrix choice[i] in the (S, n) stacks."""
    rows = np.arange(D.shape[1])
    spliced = BandedMatrix.from_padded(L[choice, rows], D[choice, rows], U[choice, rows])
    if not validate:
        return spliced
    result = validate_m_matrix(spliced)
    if not result.ok:
        logger.warning("Row-spliced matrix is not an M-matrix: %s", result.reason)
        return spliced
    return BandedMatrix(spliced.lower, spliced.diag, spliced.upper, m_matrix_checked=True)


def row_splice(sources: Sequence[Tuple[BandedMatrix, int]]) -> BandedMatrix:
    """
    Builds the matrix whose row i is row i of the matrix paired with i.

    sources lists (matrix, row_index) pairs; every row index 0..n-1 must be
    assigned exactly once.
    """
    if not sources:
        raise DimensionMismatchError("row_splice needs at least one source")
    matrices = [m for m, _ in sources]
    n = matrices[0].n
    if any(m.n != n for m in matrices):
        raise DimensionMismatchError("All spliced matrices must share the same dimension")
    rows = [int(r) for _, r in sources]
    if len(rows) != n or sorted(rows) != list(range(n)):
        raise DimensionMismatchError(
            f"row_splice needs exactly one source per row 0..{n - 1}, got rows {sorted(rows)}"
        )
    choice = np.empty(n, dtype=np.int64)
    choice[rows] = np.arange(n)
    L, D, U = stack_padded(matrices)
    return splice_padded(L, D, U, choice)
