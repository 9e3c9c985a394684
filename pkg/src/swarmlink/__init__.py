"""Decentralized connectivity maintenance for robot swarms, in simulation.

Robots grow redundant relay chains from a static root to distant targets,
repair them when relays fail, and a central observer measures
connectivity, completion time and bandwidth.
"""

from .engine import RunResult, TerminationReport, WorldState, run, simulate, spawn_initial, step
from .harness import fault_matrix, nominal_matrix, optimal_baseline, run_sweep
from .model import ConfigError, ControlParams, ExperimentConfig, Pose2D, RobotState, Role, Target

__all__ = [
    "ConfigError",
    "ControlParams",
    "ExperimentConfig",
    "Pose2D",
    "RobotState",
    "Role",
    "RunResult",
    "Target",
    "TerminationReport",
    "WorldState",
    "fault_matrix",
    "nominal_matrix",
    "optimal_baseline",
    "run",
    "run_sweep",
    "simulate",
    "spawn_initial",
    "step",
]

__version__ = "0.1.0"
