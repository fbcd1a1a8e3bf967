"""
Experiment configuration: TOML with ``[env]``, ``[algorithm]`` and ``[run]``
tables. Unknown names or keys and out-of-range values are rejected before
anything runs.

    [env]
    name = "random_walk"
    n_states = 5

    [algorithm]
    name = "td0"
    alpha = "harmonic"
    episodes = 1000

    [run]
    seed = 0
    replicates = 4
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from rltrade.harness.registry import ALGORITHMS, COMMON, ENVIRONMENTS, FEATURE_NAMES, REQUIRED


class ConfigError(ValueError):
    exit_code = 3


class UnknownNameError(ConfigError):
    """Unregistered environment, algorithm, feature map or config key."""

    exit_code = 2


class InvalidValueError(ConfigError):
    """A recognised key with a value of the wrong type or outside its range."""

    exit_code = 3


RUN_DEFAULTS = {"seed": 0, "replicates": 1, "jobs": 1, "out": None}
SECTIONS = ("env", "algorithm", "run")


@dataclass(frozen=True)
class ExperimentConfig:
    env: str
    algorithm: str
    env_params: dict[str, Any] = field(default_factory=dict)
    algo_params: dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    replicates: int = 1
    jobs: int = 1
    out: str | None = None

    def __post_init__(self):
        validate(self)

    def with_overrides(self, overrides: Mapping[str, Any]) -> "ExperimentConfig":
        """Copy with keys replaced; bare keys resolve to algorithm, then env, then run."""
        env_p, algo_p, run_p = dict(self.env_params), dict(self.algo_params), {}
        for key, value in overrides.items():
            section, _, name = key.rpartition(".")
            if not section:
                section = _resolve_section(self, name)
            if section == "env":
                env_p[name] = value
            elif section == "algorithm":
                algo_p[name] = value
            elif section == "run" and name in RUN_DEFAULTS:
                run_p[name] = value
            else:
                raise UnknownNameError(f"unknown key {key!r}")
        return dataclasses.replace(self, env_params=env_p, algo_params=algo_p, **run_p)


def _resolve_section(cfg: ExperimentConfig, name: str) -> str:
    if name in ALGORITHMS[cfg.algorithm].params or name in COMMON:
        return "algorithm"
    if name in ENVIRONMENTS[cfg.env].params:
        return "env"
    if name in RUN_DEFAULTS:
        return "run"
    raise UnknownNameError(f"unknown key {name!r}")


def _unknown(kind: str, name: str, known) -> UnknownNameError:
    return UnknownNameError(f"unknown {kind} {name!r}; available: {', '.join(sorted(known))}")


def _number(key, value, lo=-math.inf, hi=math.inf, lo_open=False, hi_open=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidValueError(f"{key} must be a number, got {value!r}")
    if integer and not isinstance(value, int):
        raise InvalidValueError(f"{key} must be an integer, got {value!r}")
    if not math.isfinite(value):
        raise InvalidValueError(f"{key} must be finite, got {value!r}")
    below = value <= lo if lo_open else value < lo
    above = value >= hi if hi_open else value > hi
    if below or above:
        left, right = "(" if lo_open else "[", ")" if hi_open else "]"
        raise InvalidValueError(f"{key} = {value!r} outside {left}{lo}, {hi}{right}")


def _check_algo_value(key, value):
    if key == "alpha":
        if value != "harmonic":
            _number(key, value, 0.0, 1.0, lo_open=True)
    elif key in ("alpha_actor", "alpha_critic"):
        if value is not None:
            _number(key, value, 0.0, lo_open=True)
    elif key in ("lambda", "epsilon", "epsilon_min", "epsilon_decay"):
        _number(key, value, 0.0, 1.0)
    elif key == "gamma":
        if value is not None:
            _number(key, value, 0.0, 1.0, lo_open=True)
    elif key in ("episodes", "max_steps", "feature_groups", "feature_degree"):
        _number(key, value, 1, integer=True)
    elif key == "ridge":
        _number(key, value, 0.0)
    elif key == "v_init":
        _number(key, value)
    elif key == "features":
        if value not in FEATURE_NAMES:
            raise _unknown("feature map", value, FEATURE_NAMES)
    elif key == "trace_gamma":
        if not isinstance(value, bool):
            raise InvalidValueError(f"trace_gamma must be true or false, got {value!r}")


def validate(cfg: ExperimentConfig) -> None:
    if cfg.env not in ENVIRONMENTS:
        raise _unknown("environment", cfg.env, ENVIRONMENTS)
    if cfg.algorithm not in ALGORITHMS:
        raise _unknown("algorithm", cfg.algorithm, ALGORITHMS)
    env_known = ENVIRONMENTS[cfg.env].params
    for key in cfg.env_params:
        if key not in env_known:
            raise _unknown(f"key for environment {cfg.env!r}:", key, env_known)
    for key, default in env_known.items():
        if default is REQUIRED and key not in cfg.env_params:
            raise InvalidValueError(f"environment {cfg.env!r} needs {key!r}")
    algo_known = {**COMMON, **ALGORITHMS[cfg.algorithm].params}
    for key, value in cfg.algo_params.items():
        if key not in algo_known:
            raise _unknown(f"key for algorithm {cfg.algorithm!r}:", key, algo_known)
        _check_algo_value(key, value)
    _number("seed", cfg.seed, 0, integer=True)
    _number("replicates", cfg.replicates, 1, integer=True)
    _number("jobs", cfg.jobs, 1, integer=True)
    if cfg.out is not None and not isinstance(cfg.out, str):
        raise InvalidValueError(f"out must be a path string, got {cfg.out!r}")


def resolved_params(cfg: ExperimentConfig) -> tuple[dict, dict]:
    """(env params, algorithm params) with defaults filled in."""
    env_p = {**ENVIRONMENTS[cfg.env].params, **cfg.env_params}
    algo_p = {**COMMON, **ALGORITHMS[cfg.algorithm].params, **cfg.algo_params}
    return env_p, algo_p


def config_from_dict(data: Mapping[str, Any]) -> ExperimentConfig:
    for section in data:
        if section not in SECTIONS:
            raise _unknown("config section", section, SECTIONS)
    env = dict(data.get("env", {}))
    algo = dict(data.get("algorithm", {}))
    run = dict(data.get("run", {}))
    if "name" not in env:
        raise InvalidValueError("[env] needs a name")
    if "name" not in algo:
        raise InvalidValueError("[algorithm] needs a name")
    for key in run:
        if key not in RUN_DEFAULTS:
            raise _unknown("key in [run]:", key, RUN_DEFAULTS)
    return ExperimentConfig(
        env=env.pop("name"),
        algorithm=algo.pop("name"),
        env_params=env,
        algo_params=algo,
        **{**RUN_DEFAULTS, **run},
    )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise InvalidValueError(f"{path}: {exc}") from exc
    cfg = config_from_dict(data)
    # relative file paths in [env] are taken relative to the config file
    for key in ("path",):
        value = cfg.env_params.get(key)
        if isinstance(value, str) and not Path(value).is_absolute():
            cfg = dataclasses.replace(
                cfg, env_params={**cfg.env_params, key: str(path.parent / value)}
            )
    return cfg
