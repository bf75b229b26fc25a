"""Experiment harness: JSON configurations, seeded replications and CSV rows."""

from .config import ConfigError, ExperimentConfig, load_config
from .experiments import run_experiment
from .rows import ResultRow, read_csv, rows_to_csv, write_csv

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "run_experiment",
           "ResultRow", "read_csv", "rows_to_csv", "write_csv"]
