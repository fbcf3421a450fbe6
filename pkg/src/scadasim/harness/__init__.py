"""Scenario configuration, execution, reporting and the command line."""
from .config import (BUILTIN, DEFAULTS, SCENARIO_IDS, Scenario, ValidationError, builtin_scenario, load_config,
                     resolve, scenario_from)
from .scenario import (RunReport, RunResult, ScenarioError, Simulation, SweepResult, rerun_from_report,
                       run_scenario, run_sweep, write_outputs)

__all__ = [
    "BUILTIN", "DEFAULTS", "SCENARIO_IDS", "Scenario", "ValidationError", "builtin_scenario", "load_config",
    "resolve", "scenario_from",
    "RunReport", "RunResult", "ScenarioError", "Simulation", "SweepResult", "rerun_from_report",
    "run_scenario", "run_sweep", "write_outputs",
]
