import math

import numpy as np
import pandas as pd
import pytest

from penalty_hjb.core.errors import ConfigError
from penalty_hjb.experiments.config_builder import RunConfig
from penalty_hjb.experiments.experiments import (
    PriceJob,
    check_instance,
    iteration_histogram,
    log_log_slope,
    run_iteration_stats,
    run_jobs,
    run_oracle_check,
    run_penalty_sweep,
    run_price,
    run_timing,
)
from penalty_hjb.experiments.random_problems import (
    non_m_matrix_instance,
    random_instance,
    random_m_matrix,
)
from penalty_hjb.linalg.banded import validate_m_matrix
from penalty_hjb.models.models import PricingRun, SolverKind
from penalty_hjb.pricing.bs_model import butterfly_payoff


@pytest.fixture
def small_cfg() -> RunConfig:
    return RunConfig(M=8, N=25, rho_list=(1e2, 1e3, 1e4), stats_rho_list=(4e3, 1e6))


def test_log_log_slope_exact():
    rhos = [1e1, 1e2, 1e3, 1e4]
    assert log_log_slope(rhos, [3.0 / r for r in rhos]) == pytest.approx(-1.0, abs=1e-10)
    assert log_log_slope(rhos, [5.0 / r**2 for r in rhos]) == pytest.approx(-2.0, abs=1e-10)


@pytest.mark.parametrize("rhos, errors", [
    ([1e4], [1e-3]),
    ([1e2, 1e3], [1e-2, 0.0]),
    ([1e3, 1e3], [1e-2, 1e-3]),
])
def test_log_log_slope_undefined(rhos, errors):
    assert log_log_slope(rhos, errors) is None


def test_random_m_matrices_are_valid(rng):
    for n in (2, 3, 6, 50):
        m = random_m_matrix(rng, n)
        assert validate_m_matrix(m).ok
        assert np.all(m.row_sums() >= 0.1 - 1e-12)


def test_random_instance_shape(rng):
    for _ in range(20):
        inst = random_instance(rng)
        assert 2 <= inst.matrices[0].n <= 6
        assert 1 <= len(inst.matrices) <= 3
        assert inst.controls[0] == "s0"
        assert "s0: lower=" in inst.describe()


def test_run_jobs_keeps_order(small_cfg):
    mp, grid, payoff = small_cfg.market, small_cfg.grid, butterfly_payoff()
    jobs = [PriceJob(mp, grid, payoff, SolverKind.PENALTY, {"rho": rho}) for rho in (1e2, 1e6)]
    sequential = run_jobs(jobs, 1)
    pooled = run_jobs(jobs, 2)
    for a, b in zip(sequential, pooled):
        np.testing.assert_array_equal(a.surface, b.surface)
        assert a.config["solver_config"]["rho"] == b.config["solver_config"]["rho"]


def test_price_writes_solution_and_stats(small_cfg, tmp_path):
    cfg = RunConfig(**{**small_cfg.to_mapping(), "method": "both"})
    result = run_price(cfg, tmp_path)
    solution = pd.read_csv(tmp_path / "solution.csv")
    assert list(solution.columns) == ["S", "V"]
    assert len(solution) == cfg.N
    assert solution["S"].iloc[-1] == pytest.approx(600.0)
    np.testing.assert_array_equal(solution["V"].to_numpy(), result.runs[SolverKind.PENALTY].time_zero)

    stats = pd.read_csv(tmp_path / "stats.csv")
    assert list(stats.columns) == ["timestep", "method", "iterations", "wall_time_seconds"]
    assert len(stats) == 2 * (cfg.M - 1)
    assert stats["timestep"].iloc[0] == cfg.M - 2
    assert list(stats["method"].iloc[:2]) == ["penalty", "policy"]


def test_price_csv_is_reproducible(small_cfg, tmp_path):
    run_price(small_cfg, tmp_path / "a")
    run_price(small_cfg, tmp_path / "b")
    first = (tmp_path / "a" / "solution.csv").read_bytes()
    assert first == (tmp_path / "b" / "solution.csv").read_bytes()


def test_price_without_output_dir_writes_nothing(small_cfg, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    run_price(small_cfg)
    assert list(tmp_path.iterdir()) == []


def test_sweep(small_cfg, tmp_path):
    result = run_penalty_sweep(small_cfg, tmp_path)
    frame = pd.read_csv(tmp_path / "sweep.csv")
    assert list(frame.columns) == ["rho", "error_inf"]
    assert list(frame["rho"]) == [1e2, 1e3, 1e4]
    assert (frame["error_inf"] >= 0).all()
    assert list(result.slopes) == [small_cfg.grid.label]


def test_sweep_single_rho_has_no_slope(small_cfg):
    cfg = RunConfig(**{**small_cfg.to_mapping(), "rho_list": [1e4]})
    result = run_penalty_sweep(cfg)
    assert len(result.frame) == 1
    assert result.slopes[cfg.grid.label] is None


def test_sweep_over_grids(small_cfg):
    cfg = RunConfig(**{**small_cfg.to_mapping(), "grid_list": ["6x20", "4x30"], "rho_list": [1e3, 1e5]})
    frame = run_penalty_sweep(cfg).frame
    assert list(frame.columns) == ["grid", "rho", "error_inf"]
    assert list(frame["grid"]) == ["6x20", "6x20", "4x30", "4x30"]


def test_histogram_percentages():
    run = PricingRun(surface=np.zeros((5, 3)), timesteps=[3, 2, 1, 0], per_step_iters=[2, 1, 2, 2],
                     per_step_wall_time=[0.0] * 4, solver_kind=SolverKind.PENALTY)
    hist = iteration_histogram(run)
    assert list(hist["n"]) == [1, 2]
    assert list(hist["percent"]) == ["25.00", "75.00"]


def test_iteration_stats_one_step_grid(tmp_path):
    cfg = RunConfig(grid_list=["2x21"], stats_rho_list=[4e3, 1e6])
    frame = run_iteration_stats(cfg, tmp_path)
    assert len(frame) == 3
    assert list(frame["method"]) == ["policy", "penalty", "penalty"]
    assert list(frame["rho"]) == ["", "4000", "1000000"]
    assert set(frame["percent"]) == {"100.00"}
    written = pd.read_csv(tmp_path / "iterations.csv", dtype={"percent": str, "rho": str}, keep_default_na=False)
    assert list(written.columns) == ["grid", "method", "rho", "n", "percent"]
    assert list(written["percent"]) == ["100.00"] * 3


def test_timing(small_cfg, tmp_path):
    result = run_timing(small_cfg, tmp_path)
    frame = pd.read_csv(tmp_path / "timings.csv", keep_default_na=False)
    assert list(frame.columns) == ["grid", "method", "rho", "wall_time_seconds", "total_iterations"]
    assert list(frame["method"]) == ["policy", "penalty", "penalty"]
    assert set(result.ratios[small_cfg.grid.label]) == {4e3, 1e6}
    assert all(math.isfinite(r) for r in result.ratios[small_cfg.grid.label].values())


def test_oracle_check_passes():
    summary = run_oracle_check(seed=42, trials=100)
    assert summary.ok
    assert summary.passed == 100
    assert summary.rejected == 0


def test_oracle_check_is_seeded():
    a = run_oracle_check(seed=7, trials=10)
    b = run_oracle_check(seed=7, trials=10)
    assert (a.passed, a.rejected) == (b.passed, b.rejected)


def test_oracle_check_rejects_non_m_matrices():
    summary = run_oracle_check(seed=1, trials=5, instance_factory=non_m_matrix_instance)
    assert summary.rejected == 5
    assert summary.passed == 0
    assert summary.ok


def test_oracle_check_needs_trials():
    with pytest.raises(ConfigError):
        run_oracle_check(seed=1, trials=0)


def test_check_instance_agrees_with_brute_force(rng):
    inst = random_instance(rng, max_nodes=6, max_controls=3)
    assert check_instance(inst) is None
