from pathlib import Path

import pytest
import yaml

from penalty_hjb.core.errors import ConfigError
from penalty_hjb.experiments.config_builder import (
    BUTTERFLY,
    ENV_VAR_NAME,
    RunConfig,
    dump_run_config,
    load_run_config,
    parse_grid_label,
    parse_payoff,
    resolve_config_path,
)
from penalty_hjb.models.models import SolverKind
from penalty_hjb.pricing.bs_model import BUTTERFLY_BREAKPOINTS


def _write(tmp_path: Path, text: str, name: str = "cfg.yaml") -> Path:
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_defaults_are_the_desk_parameters():
    cfg = RunConfig()
    assert (cfg.r_b, cfg.r_l, cfg.r_f, cfg.sigma) == (0.15, 0.1, 0.08, 0.4)
    assert (cfg.s_max, cfg.T, cfg.M, cfg.N) == (600.0, 1.0, 400, 400)
    assert cfg.tol == 1e-8
    assert cfg.rho == 1e4
    assert cfg.payoff == BUTTERFLY
    assert cfg.payoff_fn.breakpoints == BUTTERFLY_BREAKPOINTS
    assert cfg.methods == (SolverKind.PENALTY,)


def test_both_methods():
    assert RunConfig(method="both").methods == (SolverKind.PENALTY, SolverKind.POLICY)


def test_solver_config():
    cfg = RunConfig(rho=5.0, max_iters=7)
    assert cfg.solver_config("penalty") == {
        "tol": 1e-8, "max_iters": 7, "termination": "residual", "rho": 5.0, "reference_control": 0,
    }
    assert cfg.solver_config(SolverKind.PENALTY, rho=1e6)["rho"] == 1e6
    assert "rho" not in cfg.solver_config("policy")


@pytest.mark.parametrize("text", [
    "(0,0) (100,0) (200,25) (300,0) (600,0)",
    " ( 0 , 0 )(100,0) (200, 25) (300,0)   (600,0) ",
])
def test_payoff_string_form(text):
    assert parse_payoff(text) == BUTTERFLY_BREAKPOINTS


def test_payoff_list_form_and_literal():
    assert parse_payoff([[0, 1], [600, 2]]) == ((0.0, 1.0), (600.0, 2.0))
    assert parse_payoff("Butterfly") == BUTTERFLY


@pytest.mark.parametrize("bad", ["(0,0) junk (600,0)", "", [[0, 0], [0, 1]], 5])
def test_bad_payoff(bad):
    with pytest.raises(ConfigError) as exc:
        RunConfig(payoff=bad)
    assert exc.value.field == "payoff"


def test_grid_labels():
    assert parse_grid_label("900x30") == (900, 30)
    assert RunConfig(grid_list="400x400, 30X900").grid_list == ("400x400", "30x900")
    assert RunConfig().grid_for("900x30").M == 900
    with pytest.raises(ConfigError):
        RunConfig(grid_list=["400 by 400"])


def test_comma_separated_rho_list():
    assert RunConfig(rho_list="1e2,1e3").rho_list == (100.0, 1000.0)


@pytest.mark.parametrize("kwargs, field", [
    (dict(method="newton"), "method"),
    (dict(termination="never"), "termination"),
    (dict(tol=0.0), "tol"),
    (dict(rho=-1.0), "rho"),
    (dict(sigma=0.0), "sigma"),
    (dict(r_b=0.05), "r_b"),
    (dict(M=1), "M"),
    (dict(N=1), "N"),
    (dict(jobs=0), "jobs"),
    (dict(rho_list=(1.0, 0.0)), "rho_list"),
])
def test_invalid_fields(kwargs, field):
    with pytest.raises(ConfigError) as exc:
        RunConfig(**kwargs)
    assert exc.value.field == field


def test_flat_file(tmp_path):
    path = _write(tmp_path, "M: 50\nN: 60\nmethod: policy\n")
    cfg = load_run_config(path)
    assert (cfg.M, cfg.N) == (50, 60)
    assert cfg.methods == (SolverKind.POLICY,)


def test_profiles_file(tmp_path):
    path = _write(tmp_path, "profiles:\n  a:\n    M: 10\n  b:\n    M: 20\n    rho: 1.0e+6\n")
    assert load_run_config(path, profile="b").rho == 1e6
    assert load_run_config(path, profile="a").M == 10
    with pytest.raises(ConfigError, match="profile 'c' not found"):
        load_run_config(path, profile="c")


def test_shipped_profiles_load():
    repo_root = Path(__file__).resolve().parents[1]
    path = repo_root / "src" / "config" / "experiment_profiles.yaml"
    data = yaml.safe_load(path.read_text(encoding="utf-8"))
    for name in data["profiles"]:
        load_run_config(path, profile=name)
    assert load_run_config(path, profile="equal_rates").methods == (SolverKind.PENALTY, SolverKind.POLICY)
    assert load_run_config(path, profile="sweep").grid_list == ("400x400", "900x30", "30x900")


def test_unknown_key_reports_line(tmp_path):
    path = _write(tmp_path, "M: 50\n\nsigmaa: 0.3\n")
    with pytest.raises(ConfigError) as exc:
        load_run_config(path)
    assert exc.value.field == "sigmaa"
    assert exc.value.line == 3
    assert str(path) in str(exc.value)


def test_invalid_value_reports_line(tmp_path):
    path = _write(tmp_path, "profiles:\n  desk:\n    M: 50\n    method: newton\n")
    with pytest.raises(ConfigError) as exc:
        load_run_config(path)
    assert exc.value.field == "method"
    assert exc.value.line == 4


def test_uncoercible_value(tmp_path):
    path = _write(tmp_path, "M: many\n")
    with pytest.raises(ConfigError) as exc:
        load_run_config(path)
    assert exc.value.field == "M"
    assert exc.value.line == 1


def test_broken_yaml(tmp_path):
    path = _write(tmp_path, "M: [1, 2\n")
    with pytest.raises(ConfigError, match="not valid YAML"):
        load_run_config(path)


def test_env_var_substitution(tmp_path, monkeypatch):
    monkeypatch.setenv("HJB_TEST_OUT", "/tmp/hjb")
    path = _write(tmp_path, "output_dir: ${HJB_TEST_OUT}/runs\n")
    assert load_run_config(path).output_dir == "/tmp/hjb/runs"


def test_env_var_selects_file(tmp_path, monkeypatch):
    path = _write(tmp_path, "M: 33\n")
    monkeypatch.setenv(ENV_VAR_NAME, str(path))
    assert resolve_config_path() == path.resolve()
    assert load_run_config().M == 33


def test_missing_files(tmp_path, monkeypatch):
    with pytest.raises(FileNotFoundError):
        load_run_config(tmp_path / "nope.yaml")
    monkeypatch.setenv(ENV_VAR_NAME, str(tmp_path / "nope.yaml"))
    with pytest.raises(FileNotFoundError):
        resolve_config_path()


def test_overrides_win_and_none_is_ignored(tmp_path):
    path = _write(tmp_path, "M: 50\nrho: 10.0\n")
    cfg = load_run_config(path, overrides={"rho": 1e5, "M": None, "trials": 3})
    assert cfg.rho == 1e5
    assert cfg.M == 50
    assert cfg.trials == 3


def test_dump_and_reload(tmp_path):
    cfg = RunConfig(M=30, N=40, payoff=((0.0, 0.0), (300.0, 10.0), (600.0, 0.0)), grid_list=("30x40",))
    path = tmp_path / "dump.yaml"
    dump_run_config(cfg, path)
    assert load_run_config(path) == cfg


@pytest.mark.parametrize("payoff", ["(0,10) (600,40)", [[0, 0], [300, 5], [600, 1]]])
def test_payoff_with_non_zero_ends(payoff):
    with pytest.raises(ConfigError, match="must be zero") as exc:
        RunConfig(payoff=payoff)
    assert exc.value.field == "payoff"


def test_payoff_end_uses_configured_s_max():
    payoff = "(0,0) (300,10) (400,0)"
    assert RunConfig(s_max=400.0, payoff=payoff).payoff_fn(400.0) == 0.0
    with pytest.raises(ConfigError):
        RunConfig(s_max=600.0, payoff="(0,0) (300,10) (600,5)")


def test_non_zero_end_payoff_reports_line(tmp_path):
    path = _write(tmp_path, "M: 6\npayoff: '(0,10) (600,40)'\n")
    with pytest.raises(ConfigError) as exc:
        load_run_config(path)
    assert exc.value.field == "payoff"
    assert exc.value.line == 2


@pytest.mark.parametrize("text, field, expected", [
    ("M: 40.0\n", "M", 40),
    ("M: '40'\n", "M", 40),
    ("N: 1.0e+2\n", "N", 100),
])
def test_whole_number_floats_are_accepted(tmp_path, text, field, expected):
    value = getattr(load_run_config(_write(tmp_path, text)), field)
    assert value == expected
    assert isinstance(value, int)


@pytest.mark.parametrize("text, field, line", [
    ("M: 400.7\n", "M", 1),
    ("N: 50\nseed: 3.5\n", "seed", 2),
    ("profiles:\n  desk:\n    max_iters: 2.25\n", "max_iters", 3),
])
def test_fractional_integers_are_rejected(tmp_path, text, field, line):
    with pytest.raises(ConfigError, match="whole number") as exc:
        load_run_config(_write(tmp_path, text))
    assert exc.value.field == field
    assert exc.value.line == line
