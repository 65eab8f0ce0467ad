import numpy as np
import pytest

from penalty_hjb.linalg.banded import BandedMatrix
from penalty_hjb.models.models import ControlProblem, Grid, MarketParams


def scalar(value: float) -> BandedMatrix:
    return BandedMatrix([], [value], [])


@pytest.fixture
def scalar_problem() -> ControlProblem:
    """min{x - 0, x - 1} = 0, solution x = 1."""
    return ControlProblem(("s0", "s1"), (scalar(1.0), scalar(1.0)), ([0.0], [1.0]))


@pytest.fixture
def two_node_problem() -> ControlProblem:
    """A_s0 = tridiag([-1],[2,2],[-1]), b_s0 = (1,1); A_s1 = I, b_s1 = (0.3,0.2); solution (1,1)."""
    a0 = BandedMatrix([-1.0], [2.0, 2.0], [-1.0])
    a1 = BandedMatrix.identity(2)
    return ControlProblem(("s0", "s1"), (a0, a1), ([1.0, 1.0], [0.3, 0.2]))


@pytest.fixture
def identity_pair_problem() -> ControlProblem:
    """A_0 = A_1 = I, b_0 = (0,0), b_1 = (1,1)."""
    eye = BandedMatrix.identity(2)
    return ControlProblem(("s0", "s1"), (eye, eye), ([0.0, 0.0], [1.0, 1.0]))


@pytest.fixture
def desk_market() -> MarketParams:
    return MarketParams(r_b=0.15, r_l=0.1, r_f=0.08, sigma=0.4)


@pytest.fixture
def small_grid() -> Grid:
    return Grid(s_max=600.0, T=1.0, M=40, N=61)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240607)
