# penalty_hjb/experiments/config_builder.py

from __future__ import annotations

import logging
import os
import re
from dataclasses import dataclass, fields
from pathlib import Path
from string import Template
from typing import Any, Dict, Mapping, Tuple

import yaml

from penalty_hjb.core.errors import ConfigError
from penalty_hjb.models.models import Grid, MarketParams, PiecewiseLinearPayoff, SolverKind, TerminationRule
from penalty_hjb.pricing.bs_model import BUTTERFLY_BREAKPOINTS, sample_payoff

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_RELATIVE = Path("src") / "config" / "experiment_profiles.yaml"
ENV_VAR_NAME = "PENALTY_HJB_CONFIG"
DEFAULT_PROFILE = "desk"

METHODS = ("penalty", "policy", "both")
BUTTERFLY = "butterfly"

_PAIR = re.compile(r"\(\s*([^(),\s]+)\s*,\s*([^(),\s]+)\s*\)")
_GRID = re.compile(r"^\s*(\d+)\s*[xX]\s*(\d+)\s*$")


def _as_float_list(value) -> Tuple[float, ...]:
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    return tuple(float(v) for v in value)


def parse_grid_label(label: str) -> Tuple[int, int]:
    """'400x400' -> (M, N)."""
    match = _GRID.match(str(label))
    if match is None:
        raise ValueError(f"grid must look like MxN, got '{label}'")
    return int(match.group(1)), int(match.group(2))


def _as_grid_list(value) -> Tuple[str, ...]:
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    labels = []
    for v in value:
        M, N = parse_grid_label(v)
        labels.append(f"{M}x{N}")
    return tuple(labels)


def parse_payoff(value) -> str | Tuple[Tuple[float, float], ...]:
    """The literal 'butterfly', a list of [S, P] pairs or the string '(0,0) (100,0) ...'."""
    if isinstance(value, str):
        text = value.strip()
        if text.lower() == BUTTERFLY:
            return BUTTERFLY
        pairs = _PAIR.findall(text)
        if not pairs or _PAIR.sub("", text).strip():
            raise ValueError(f"cannot read breakpoints from '{value}'")
        points = tuple((float(s), float(p)) for s, p in pairs)
    else:
        try:
            points = tuple((float(s), float(p)) for s, p in value)
        except (TypeError, ValueError):
            raise ValueError(f"payoff must be '{BUTTERFLY}' or a list of [S, P] pairs, got {value!r}")
    PiecewiseLinearPayoff(points)
    return points


def _as_int(raw) -> int:
    value = float(raw) if isinstance(raw, (float, str)) else raw
    if isinstance(value, float) and not value.is_integer():
        raise ValueError(f"expected a whole number, got {raw!r}")
    return int(value)


_COERCE = {float: float, int: _as_int, str: str}


@dataclass(frozen=True)
class RunConfig:
    """Experiment settings. Defaults reproduce the desk parameters of the butterfly study."""
    r_b: float = 0.15
    r_l: float = 0.1
    r_f: float = 0.08
    sigma: float = 0.4
    s_max: float = 600.0
    T: float = 1.0
    M: int = 400
    N: int = 400
    payoff: Any = BUTTERFLY
    tol: float = 1e-8
    rho: float = 1e4
    method: str = "penalty"
    reference_control: int = 0
    max_iters: int = 100
    termination: str = "residual"
    output_dir: str = "results"
    seed: int = 42
    trials: int = 100
    jobs: int = 1
    rho_list: Tuple[float, ...] = (1e1, 1e2, 1e3, 1e4, 1e5, 1e6)
    stats_rho_list: Tuple[float, ...] = (4e3, 1e6)
    grid_list: Tuple[str, ...] = ()

    def __post_init__(self):
        for name, parse in (("payoff", parse_payoff), ("rho_list", _as_float_list),
                            ("stats_rho_list", _as_float_list), ("grid_list", _as_grid_list)):
            try:
                object.__setattr__(self, name, parse(getattr(self, name)))
            except (TypeError, ValueError) as e:
                raise ConfigError(str(e), field=name) from e
        if self.method not in METHODS:
            raise ConfigError(f"must be one of {', '.join(METHODS)}, got '{self.method}'", field="method")
        try:
            TerminationRule(self.termination)
        except ValueError as e:
            raise ConfigError(f"must be 'residual' or 'stagnation', got '{self.termination}'",
                              field="termination") from e
        for name in ("tol", "rho"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"must be positive, got {getattr(self, name)}", field=name)
        if any(r <= 0 for r in self.rho_list + self.stats_rho_list):
            raise ConfigError("penalty parameters must be positive", field="rho_list")
        if self.max_iters < 1:
            raise ConfigError(f"must be at least 1, got {self.max_iters}", field="max_iters")
        if self.jobs < 1:
            raise ConfigError(f"must be at least 1, got {self.jobs}", field="jobs")
        if self.trials < 0:
            raise ConfigError(f"must be non-negative, got {self.trials}", field="trials")
        try:
            MarketParams(self.r_b, self.r_l, self.r_f, self.sigma)
        except ValueError as e:
            raise ConfigError(str(e), field="sigma" if "sigma" in str(e) else "r_b") from e
        try:
            Grid(self.s_max, self.T, self.M, self.N)
        except ValueError as e:
            raise ConfigError(str(e), field=_grid_field(str(e))) from e
        try:
            sample_payoff(self.payoff_fn, self.grid)
        except ValueError as e:
            raise ConfigError(str(e), field="payoff") from e

    @property
    def market(self) -> MarketParams:
        return MarketParams(self.r_b, self.r_l, self.r_f, self.sigma)

    @property
    def grid(self) -> Grid:
        return Grid(self.s_max, self.T, self.M, self.N)

    def grid_for(self, label: str) -> Grid:
        M, N = parse_grid_label(label)
        return Grid(self.s_max, self.T, M, N)

    @property
    def payoff_fn(self) -> PiecewiseLinearPayoff:
        if self.payoff == BUTTERFLY:
            return PiecewiseLinearPayoff(BUTTERFLY_BREAKPOINTS)
        return PiecewiseLinearPayoff(self.payoff)

    @property
    def methods(self) -> Tuple[SolverKind, ...]:
        if self.method == "both":
            return (SolverKind.PENALTY, SolverKind.POLICY)
        return (SolverKind(self.method),)

    def solver_config(self, kind: SolverKind | str, rho: float | None = None) -> Dict[str, Any]:
        """Mapping consumed by build_solver."""
        cfg: Dict[str, Any] = {
            "tol": self.tol,
            "max_iters": self.max_iters,
            "termination": self.termination,
        }
        if SolverKind(kind) is SolverKind.PENALTY:
            cfg["rho"] = self.rho if rho is None else rho
            cfg["reference_control"] = self.reference_control
        return cfg

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any], lines: Mapping[str, int] | None = None,
                     path: str | Path | None = None) -> "RunConfig":
        lines = lines or {}
        known = {f.name: f for f in fields(cls)}
        values: Dict[str, Any] = {}
        for key, raw in mapping.items():
            if key not in known:
                raise ConfigError(f"unknown key (expected one of {', '.join(known)})",
                                  field=key, line=lines.get(key), path=path)
            if raw is None:
                continue
            default = known[key].default
            coerce = None if key == "payoff" else _COERCE.get(type(default))
            try:
                values[key] = coerce(raw) if coerce is not None else raw
            except (TypeError, ValueError) as e:
                raise ConfigError(f"invalid value {raw!r}: {e}", field=key, line=lines.get(key), path=path) from e
        try:
            return cls(**values)
        except ConfigError as e:
            raise ConfigError(e.message, field=e.field, line=lines.get(e.field), path=path) from e

    def to_mapping(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "payoff" and value != BUTTERFLY:
                value = [[s, p] for s, p in value]
            elif isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out


def _grid_field(message: str) -> str:
    for key in ("M >=", "N >=", "s_max"):
        if key in message:
            return key.split()[0]
    return "T"


def _find_repo_root(start: Path | None = None) -> Path:
    if start is None:
        start = Path(__file__).resolve().parent

    current = start
    for _ in range(10):
        if (current / "pyproject.toml").exists() or (current / ".git").exists():
            return current
        if current.parent == current:
            break
        current = current.parent
    return Path(__file__).resolve().parents[3]


def resolve_config_path(explicit: str | Path | None = None) -> Path | None:
    """Explicit path, then $PENALTY_HJB_CONFIG, then the repo default; None means built-in defaults."""
    if explicit is not None:
        p = Path(explicit).expanduser().resolve()
        if not p.exists():
            raise FileNotFoundError(f"Config file not found: {p}")
        return p

    env_val = os.getenv(ENV_VAR_NAME)
    if env_val:
        p = Path(env_val).expanduser().resolve()
        if not p.exists():
            raise FileNotFoundError(f"{ENV_VAR_NAME} set to '{env_val}' not found: {p}")
        return p

    default_path = _find_repo_root() / DEFAULT_CONFIG_RELATIVE
    if not default_path.exists():
        logger.warning("No config file at %s; using built-in defaults", default_path)
        return None
    return default_path


def _substitute_env_vars(obj, env_map):
    if isinstance(obj, dict):
        return {k: _substitute_env_vars(v, env_map) for k, v in obj.items()}
    elif isinstance(obj, list):
        return [_substitute_env_vars(i, env_map) for i in obj]
    elif isinstance(obj, str):
        return Template(obj).safe_substitute(env_map)
    else:
        return obj


def _key_lines(node, prefix: Tuple[str, ...] = ()) -> Dict[Tuple[str, ...], int]:
    """1-based line of every mapping key, addressed by its key path."""
    lines: Dict[Tuple[str, ...], int] = {}
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            key = prefix + (str(key_node.value),)
            lines[key] = key_node.start_mark.line + 1
            lines.update(_key_lines(value_node, key))
    return lines


def _read_yaml(path: Path) -> Tuple[Any, Dict[Tuple[str, ...], int]]:
    text = path.read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text)
        lines = _key_lines(yaml.compose(text))
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ConfigError(f"not valid YAML ({getattr(e, 'problem', e)})",
                          line=mark.line + 1 if mark else None, path=str(path)) from e
    return data, lines


def load_run_config(path: str | Path | None = None, profile: str | None = None,
                    overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """
    Reads a flat mapping or a `profiles:` file and applies overrides (None values are ignored).
    """
    cfg_path = resolve_config_path(path)
    mapping: Dict[str, Any] = {}
    lines: Dict[str, int] = {}

    if cfg_path is not None:
        data, key_lines = _read_yaml(cfg_path)
        data = data or {}
        if not isinstance(data, dict):
            raise ConfigError("top level must be a mapping", line=1, path=str(cfg_path))
        prefix: Tuple[str, ...] = ()
        if "profiles" in data:
            profiles = data["profiles"] or {}
            profile = profile or DEFAULT_PROFILE
            if profile not in profiles:
                raise ConfigError(
                    f"profile '{profile}' not found (available: {', '.join(profiles) or 'none'})",
                    field="profiles", line=key_lines.get(("profiles",)), path=str(cfg_path),
                )
            data = profiles[profile] or {}
            prefix = ("profiles", profile)
        elif profile not in (None, DEFAULT_PROFILE):
            logger.warning("%s has no profiles; ignoring profile '%s'", cfg_path, profile)
        mapping = _substitute_env_vars(dict(data), dict(os.environ))
        lines = {k[-1]: v for k, v in key_lines.items() if k[:-1] == prefix}

    for key, value in (overrides or {}).items():
        if value is not None:
            mapping[key] = value
            lines.pop(key, None)

    return RunConfig.from_mapping(mapping, lines, str(cfg_path) if cfg_path else None)


def dump_run_config(cfg: RunConfig, path: str | Path | None = None) -> str:
    text = yaml.safe_dump(cfg.to_mapping(), sort_keys=False)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
