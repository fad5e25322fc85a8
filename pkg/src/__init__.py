"""
Indoor Air Agent Simulator
Agent-based day simulation of CO2 and airborne virus quanta in a building,
with Monte Carlo batches and statistical comparison of interventions.
"""

from src.config import ConfigError, SimulationConfig, load_config, parse_config
from src.entities import SimulationError
from src.engine import Simulation, run_day
from src.history import RunHistory, export_csv, export_json, load_json
from src.metrics import OutcomeMetrics, compute_metrics
from src.batch import BatchRunError, ExperimentResult, run_batch, split_seed
from src.stats import ComparisonError, ComparisonReport, compare_experiments
from src.validation import load_scenario, run_validation

__all__ = [
    "ConfigError",
    "SimulationConfig",
    "load_config",
    "parse_config",
    "SimulationError",
    "Simulation",
    "run_day",
    "RunHistory",
    "export_csv",
    "export_json",
    "load_json",
    "OutcomeMetrics",
    "compute_metrics",
    "BatchRunError",
    "ExperimentResult",
    "run_batch",
    "split_seed",
    "ComparisonError",
    "ComparisonReport",
    "compare_experiments",
    "load_scenario",
    "run_validation",
]
