"""Experiment orchestration: configs, multi-seed runs, CSV output, property checks."""
from .checks import CheckResult, run_checks
from .config import ExperimentConfig, load_config, parse_config
from .runner import run_experiment, run_seed

__all__ = [
    "CheckResult", "ExperimentConfig", "load_config", "parse_config",
    "run_checks", "run_experiment", "run_seed",
]
