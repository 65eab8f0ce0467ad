# penalty_hjb/solvers/solver_registry.py
from __future__ import annotations
from typing import Any, Callable, Dict, Mapping, Type

from penalty_hjb.models.models import SolverKind
from penalty_hjb.solvers.nonlinear_solver import NonlinearSolver

_SOLVER_REGISTRY: Dict[str, Type[NonlinearSolver]] = {}


def register_solver(name: str) -> Callable[[Type[NonlinearSolver]], Type[NonlinearSolver]]:
    def decorator(cls: Type[NonlinearSolver]) -> Type[NonlinearSolver]:
        if name in _SOLVER_REGISTRY:
            raise ValueError(f"Solver '{name}' already registered")
        _SOLVER_REGISTRY[name] = cls
        return cls
    return decorator


def get_solver_cls(name: str | SolverKind) -> Type[NonlinearSolver]:
    _ensure_solvers_imported()
    key = name.value if isinstance(name, SolverKind) else str(name)
    try:
        return _SOLVER_REGISTRY[key]
    except KeyError:
        raise KeyError(
            f"Unknown solver '{key}'. Registered: {list(_SOLVER_REGISTRY.keys())}"
        )


def registered_solvers() -> list[str]:
    _ensure_solvers_imported()
    return list(_SOLVER_REGISTRY.keys())


def build_solver(name: str | SolverKind, cfg: Mapping[str, Any] | None = None) -> NonlinearSolver:
    return get_solver_cls(name).from_config(cfg or {})


def _ensure_solvers_imported() -> None:
    """
    Import the solvers package so that all @register_solver decorators run.
    """
    import penalty_hjb.solvers  # noqa: F401
