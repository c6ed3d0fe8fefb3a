"""Configuration module."""

from .settings import Settings, get_settings
from .experiment import (
    ExperimentConfig,
    config_hash,
    dump_experiment_config,
    load_experiment_config,
    parse_experiment_config,
)

__all__ = [
    "Settings",
    "get_settings",
    "ExperimentConfig",
    "config_hash",
    "dump_experiment_config",
    "load_experiment_config",
    "parse_experiment_config",
]
