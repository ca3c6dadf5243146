"""Configuration, experiment orchestration, fitting and output."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config, suite_config
from .counterexample import counterexample
from .fit import FitResult, extract_coefficient, fit_decay
from .run import run_experiment

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "FitResult",
    "counterexample",
    "extract_coefficient",
    "fit_decay",
    "load_config",
    "parse_config",
    "run_experiment",
    "suite_config",
]
