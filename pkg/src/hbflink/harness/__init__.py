"""Experiment orchestration: configs, sweeps, plots, checkpoint round trips and the CLI."""

from .config import ExperimentConfig, config_from_dict, load_config, write_config
from .gradsuite import run_gradient_suite
from .plot import emit_plot, read_results
from .sweep import CycleReport, ResultRow, checkpoint_cycle, rows_to_csv, run_sweep

__all__ = [
    "CycleReport", "ExperimentConfig", "ResultRow", "checkpoint_cycle", "config_from_dict", "emit_plot",
    "load_config", "read_results", "rows_to_csv", "run_gradient_suite", "run_sweep", "write_config",
]
