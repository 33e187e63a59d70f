"""Discrete-event simulator for learning-automata load balancing in RPL networks."""

from .config import ConfigError, ScenarioConfig, parse_scenario
from .metrics import MetricsReport
from .replay import check_equivalence, replay_oracle
from .simcore import EventLog, Simulator, run_scenario

__all__ = [
    "ConfigError",
    "EventLog",
    "MetricsReport",
    "ScenarioConfig",
    "Simulator",
    "check_equivalence",
    "parse_scenario",
    "replay_oracle",
    "run_scenario",
]

__version__ = "0.1.0"
