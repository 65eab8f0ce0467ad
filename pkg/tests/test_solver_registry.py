import pytest

from penalty_hjb.models.models import SolverKind, TerminationRule
from penalty_hjb.solvers.nonlinear_solver import NonlinearSolver
from penalty_hjb.solvers.penalty_solver import PenaltySolver
from penalty_hjb.solvers.policy_solver import PolicySolver
from penalty_hjb.solvers.solver_registry import (
    build_solver,
    get_solver_cls,
    register_solver,
    registered_solvers,
)


def test_both_solvers_registered():
    assert set(registered_solvers()) >= {"penalty", "policy"}
    assert get_solver_cls("penalty") is PenaltySolver
    assert get_solver_cls(SolverKind.POLICY) is PolicySolver


def test_unknown_solver():
    with pytest.raises(KeyError, match="newton"):
        get_solver_cls("newton")


def test_duplicate_registration():
    with pytest.raises(ValueError, match="already registered"):
        register_solver("penalty")(PenaltySolver)


def test_build_from_flat_config():
    solver = build_solver("penalty", {"rho": "1e6", "tol": 1e-10, "termination": "stagnation",
                                      "max_iters": 7, "seed": 3})
    assert isinstance(solver, NonlinearSolver)
    assert solver.config.rho == 1e6
    assert solver.config.max_iters == 7
    assert solver.config.termination is TerminationRule.STAGNATION
    assert build_solver(SolverKind.POLICY).config.tol == 1e-8


def test_built_solvers_solve(scalar_problem):
    for kind in (SolverKind.PENALTY, SolverKind.POLICY):
        report = build_solver(kind, {"rho": 1e8}).solve(scalar_problem)
        assert report.converged
        assert report.method is kind
        assert report.x[0] == pytest.approx(1.0, abs=1e-7)
