import pandas as pd
import pytest

from penalty_hjb.experiments.experiments import OracleSummary
from penalty_hjb.main import cli


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text(f"M: 6\nN: 21\noutput_dir: {tmp_path / 'out'}\n", encoding="utf-8")
    return path


def test_price(config_file, tmp_path, capsys):
    assert cli.main(["price", "--config", str(config_file), "--method", "both"]) == cli.EXIT_OK
    out = tmp_path / "out"
    assert len(pd.read_csv(out / "solution.csv")) == 21
    stats = pd.read_csv(out / "stats.csv")
    assert set(stats["method"]) == {"penalty", "policy"}
    assert "solution.csv" in capsys.readouterr().out


def test_output_dir_flag(config_file, tmp_path):
    target = tmp_path / "elsewhere"
    assert cli.main(["price", "-c", str(config_file), "-o", str(target), "--grid-n", "11"]) == cli.EXIT_OK
    assert len(pd.read_csv(target / "solution.csv")) == 11


def test_penalty_sweep_prints_slope(config_file, capsys):
    assert cli.main(["penalty-sweep", "-c", str(config_file), "--rho-list", "1e4"]) == cli.EXIT_OK
    assert "n/a" in capsys.readouterr().out


def test_iteration_stats(config_file, tmp_path):
    code = cli.main(["iteration-stats", "-c", str(config_file), "--grids", "3x15",
                     "--stats-rho-list", "1e6"])
    assert code == cli.EXIT_OK
    frame = pd.read_csv(tmp_path / "out" / "iterations.csv", keep_default_na=False)
    assert list(frame["method"].unique()) == ["policy", "penalty"]


def test_timing(config_file, tmp_path, capsys):
    assert cli.main(["timing", "-c", str(config_file), "--stats-rho-list", "1e4"]) == cli.EXIT_OK
    assert (tmp_path / "out" / "timings.csv").exists()
    assert "runtime" in capsys.readouterr().out


def test_oracle_check(config_file, capsys):
    assert cli.main(["oracle-check", "-c", str(config_file), "--trials", "20", "--seed", "5"]) == cli.EXIT_OK
    assert "oracle-check: 20/20 passed, 0 rejected at validation (seed 5)" in capsys.readouterr().out


def test_oracle_mismatch_exit_code(config_file, monkeypatch, capsys):
    failing = OracleSummary(trials=1, failures=["trial 0 (seed 42): penalty: cap_exceeded"])
    monkeypatch.setattr(cli, "run_oracle_check", lambda *args, **kwargs: failing)
    assert cli.main(["oracle-check", "-c", str(config_file)]) == cli.EXIT_ORACLE
    assert "trial 0" in capsys.readouterr().err


def test_zero_trials_is_a_usage_error(config_file, capsys):
    assert cli.main(["oracle-check", "-c", str(config_file), "--trials", "0"]) == cli.EXIT_USAGE
    assert "trials" in capsys.readouterr().err


def test_solver_failure_exit_code(config_file, capsys):
    code = cli.main(["price", "-c", str(config_file), "--max-iters", "1", "--termination", "stagnation"])
    assert code == cli.EXIT_SOLVER
    assert "did not converge" in capsys.readouterr().err


def test_missing_config(tmp_path, capsys):
    missing = tmp_path / "missing.yaml"
    assert cli.main(["price", "--config", str(missing)]) == cli.EXIT_USAGE
    assert "missing.yaml" in capsys.readouterr().err


def test_invalid_config_value(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("M: 6\nN: 21\nsigma: 0.0\n", encoding="utf-8")
    assert cli.main(["price", "-c", str(path)]) == cli.EXIT_USAGE
    assert "line 3" in capsys.readouterr().err


def test_non_zero_end_payoff_is_a_usage_error(tmp_path, capsys):
    path = tmp_path / "call.yaml"
    path.write_text(f"M: 6\nN: 21\npayoff: '(0,10) (600,40)'\noutput_dir: {tmp_path / 'out'}\n",
                    encoding="utf-8")
    assert cli.main(["price", "-c", str(path)]) == cli.EXIT_USAGE
    err = capsys.readouterr().err
    assert "line 3" in err
    assert "must be zero" in err
    assert not (tmp_path / "out").exists()


def test_bad_grid_list(config_file):
    assert cli.main(["penalty-sweep", "-c", str(config_file), "--grids", "big"]) == cli.EXIT_USAGE


def test_argparse_errors_exit_with_one(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["price", "--method", "newton"])
    assert exc.value.code == cli.EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == cli.EXIT_USAGE
