"""Discrete-event server model that drives the engine with synthetic attacks."""
from .model import (
    CostModel,
    InvalidScenario,
    ScenarioConfig,
    WorkloadKind,
    WorkloadSpec,
    load_scenario,
    scenario_from_mapping,
)
from .scenarios import PRESETS, preset
from .simulator import SimulationReport, Simulation, compute_system_metrics, generate_probe_events, run_scenario
from .sweeps import DEFAULT_THRESHOLDS, run_qos_sweep, run_threshold_sweep

__all__ = [
    "CostModel", "DEFAULT_THRESHOLDS", "InvalidScenario", "PRESETS", "ScenarioConfig", "Simulation",
    "SimulationReport", "WorkloadKind", "WorkloadSpec", "compute_system_metrics",
    "generate_probe_events", "load_scenario", "preset", "run_qos_sweep", "run_scenario",
    "run_threshold_sweep", "scenario_from_mapping",
]
