"""
Fully implicit Black-Scholes discretisation and the borrow/lend control set.

Space nodes are labelled i = 0..N-1 with S = i*h. For interior rows the
coefficients of V_{i-1}, V_i, V_{i+1} are

    a_i = -1/2 i^2 sigma^2 k + 1/2 i (r - q) k
    b_i = 1 + i^2 sigma^2 k + r k
    c_i = -1/2 i^2 sigma^2 k - 1/2 i (r - q) k

and the two boundary rows are identity rows (Dirichlet values carried over).
"""
from __future__ import annotations

import logging
from typing import List, Tuple

import numpy as np

from penalty_hjb.core.errors import ArbitrageConstraintError, MMatrixViolationError
from penalty_hjb.linalg.banded import BandedMatrix, validate_m_matrix
from penalty_hjb.models.models import Grid, MarketParams, PiecewiseLinearPayoff

logger = logging.getLogger(__name__)

CONTROL_LABELS = ("lend", "borrow", "lend+fee", "borrow+fee")

BUTTERFLY_BREAKPOINTS = ((0.0, 0.0), (100.0, 0.0), (200.0, 25.0), (300.0, 0.0), (600.0, 0.0))


def bs_matrix(rq: Tuple[float, float], sigma: float, grid: Grid) -> BandedMatrix:
    r, q = rq
    if grid.N < 3:
        raise ValueError(f"bs_matrix needs N >= 3 space nodes, got {grid.N}")
    N, k = grid.N, grid.k
    i = np.arange(1, N - 1, dtype=np.float64)
    diffusion = 0.5 * i**2 * sigma**2 * k
    drift = 0.5 * i * (r - q) * k

    lower = np.zeros(N - 1)
    diag = np.ones(N)
    upper = np.zeros(N - 1)
    lower[: N - 2] = -diffusion + drift
    diag[1:-1] = 1.0 + i**2 * sigma**2 * k + r * k
    upper[1:] = -diffusion - drift

    m = BandedMatrix(lower, diag, upper)
    result = validate_m_matrix(m)
    if not result.ok:
        row = result.row
        detail = ""
        if row is not None and 0 < row < N - 1:
            detail = f"; i*sigma^2 = {row * sigma**2:.6g} vs |r - q| = {abs(r - q):.6g}"
        raise MMatrixViolationError(
            f"Black-Scholes matrix for (r={r}, q={q}, sigma={sigma}) is not an M-matrix: "
            f"{result.reason}{detail}",
            result,
        )
    return BandedMatrix(m.lower, m.diag, m.upper, m_matrix_checked=True)


def borrow_lend_controls(mp: MarketParams) -> List[Tuple[float, float]]:
    """(r, q) pairs: lend, borrow, lend with stock fee, borrow with stock fee."""
    if not (mp.r_b >= mp.r_l >= mp.r_f >= 0.0):
        raise ArbitrageConstraintError(
            f"Rates must satisfy r_b >= r_l >= r_f >= 0, got r_b={mp.r_b}, r_l={mp.r_l}, r_f={mp.r_f}"
        )
    return [
        (mp.r_l, 0.0),
        (mp.r_b, 0.0),
        (mp.r_l, mp.r_f),
        (mp.r_b, mp.r_b - mp.r_l + mp.r_f),
    ]


def control_matrices(mp: MarketParams, grid: Grid) -> List[BandedMatrix]:
    return [bs_matrix(rq, mp.sigma, grid) for rq in borrow_lend_controls(mp)]


def butterfly_payoff() -> PiecewiseLinearPayoff:
    return PiecewiseLinearPayoff(BUTTERFLY_BREAKPOINTS)


def sample_payoff(p: PiecewiseLinearPayoff, grid: Grid) -> np.ndarray:
    """P on the space nodes. Boundary rows are identities, so P must vanish at S=0 and S=s_max."""
    ends = p(np.array([0.0, grid.s_max]))
    if np.any(ends != 0.0):
        raise ValueError(
            f"payoff must be zero at S=0 and S={grid.s_max:g}, got P(0)={ends[0]:g}, "
            f"P({grid.s_max:g})={ends[1]:g}"
        )
    values = np.asarray(p(grid.space_nodes), dtype=np.float64)
    # the last node can miss s_max by rounding
    values[0] = values[-1] = 0.0
    return values
