"""Config-driven experiment runner and its command-line interface."""
from rltrade.harness.config import (
    ConfigError,
    ExperimentConfig,
    InvalidValueError,
    UnknownNameError,
    config_from_dict,
    load_config,
)
from rltrade.harness.runner import (
    ExperimentResult,
    RunRecord,
    emit_plotdata,
    parse_grid,
    read_records,
    run_experiment,
    sweep,
)

__all__ = [
    "ConfigError", "ExperimentConfig", "InvalidValueError", "UnknownNameError",
    "config_from_dict", "load_config", "ExperimentResult", "RunRecord",
    "emit_plotdata", "parse_grid", "read_records", "run_experiment", "sweep",
]
