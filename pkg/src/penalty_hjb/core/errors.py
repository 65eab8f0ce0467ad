from __future__ import annotations

from typing import Any


class HJBError(Exception):
    """Base class for every error raised by penalty_hjb."""


class DimensionMismatchError(HJBError, ValueError):
    pass


class SingularPivotError(HJBError, ArithmeticError):
    def __init__(self, row: int, pivot: float, threshold: float):
        self.row = row
        self.pivot = pivot
        self.threshold = threshold
        super().__init__(
            f"Singular pivot at row {row}: |{pivot:.3e}| < {threshold:.3e}"
        )


class MMatrixViolationError(HJBError, ValueError):
    def __init__(self, message: str, result: Any = None):
        self.result = result
        super().__init__(message)


class ArbitrageConstraintError(HJBError, ValueError):
    pass


class OracleGuardError(HJBError, ValueError):
    pass


class OracleNoSolutionError(HJBError, RuntimeError):
    pass


class SolverCapExceededError(HJBError, RuntimeError):
    def __init__(self, message: str, step: int, report: Any = None, partial_run: Any = None):
        self.step = step
        self.report = report
        self.partial_run = partial_run
        super().__init__(message)


class ConfigError(HJBError, ValueError):
    def __init__(self, message: str, field: str | None = None,
                 line: int | None = None, path: str | None = None):
        self.message = message
        self.field = field
        self.line = line
        self.path = path
        where = []
        if path:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(f"field '{field}'")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
