from .generate import random_scenario
from .report import COLUMNS, report
from .runner import NotificationEvent, SimMetrics, Simulation, run
from .scenario import (
    AgentSpec,
    AuthoritySpec,
    Diagnosis,
    Encounter,
    ScenarioConfig,
    ScenarioError,
    dumps,
    load_scenario,
    loads,
    shipped_scenarios,
)

__all__ = [
    "AgentSpec",
    "AuthoritySpec",
    "COLUMNS",
    "Diagnosis",
    "Encounter",
    "NotificationEvent",
    "ScenarioConfig",
    "ScenarioError",
    "SimMetrics",
    "Simulation",
    "dumps",
    "random_scenario",
    "load_scenario",
    "loads",
    "report",
    "run",
    "shipped_scenarios",
]
