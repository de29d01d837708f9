"""Discrete-event MANET simulator with a congestion-aware routing protocol
(CARP) and a hop-count multipath baseline (AOMDV)."""

from .engine import Engine, ScenarioConfig, SimEvent, load_config, rng_stream
from .experiment import RunStats, Simulation, SweepSpec, compute_metrics, run_scenario, run_sweep

__all__ = [
    "Engine", "ScenarioConfig", "SimEvent", "load_config", "rng_stream",
    "RunStats", "Simulation", "SweepSpec", "compute_metrics", "run_scenario", "run_sweep",
]
__version__ = "0.1.0"
