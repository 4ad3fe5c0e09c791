"""Scenario configs, sweep runner, CSV/plot output and the CLI."""

from .config import ConfigError, RunPlanConfig, ScenarioConfig, load_config, parse_config
from .output import emit_csv, emit_plots, read_csv
from .runner import ExperimentRecord, PluginPipeline, run_experiment
from .scenarios import Scenario, build_scenario

__all__ = [
    "ConfigError",
    "ExperimentRecord",
    "PluginPipeline",
    "RunPlanConfig",
    "Scenario",
    "ScenarioConfig",
    "build_scenario",
    "emit_csv",
    "emit_plots",
    "load_config",
    "parse_config",
    "read_csv",
    "run_experiment",
]
