"""Experiment orchestration: configuration, the monthly evaluation protocol, reports and the CLI."""

from .config import ExperimentConfig, config_from_mapping, load_config, parse_kv
from .experiment import EvalReport, ExperimentError, MethodResult, rederive, run_experiment
from .report import emit_heatmap, emit_report, load_report

__all__ = [
    "EvalReport", "ExperimentConfig", "ExperimentError", "MethodResult", "config_from_mapping", "emit_heatmap",
    "emit_report", "load_config", "load_report", "parse_kv", "rederive", "run_experiment",
]
