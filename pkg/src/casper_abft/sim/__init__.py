from .scenario import Adversary, ConfigError, Mode, ScenarioConfig, parse_scenario, render_scenario
from .simulator import Simulation, run_scenario
from .transcript import Transcript, parse_transcript, render_transcript

__all__ = [
    "Adversary",
    "ConfigError",
    "Mode",
    "ScenarioConfig",
    "Simulation",
    "Transcript",
    "parse_scenario",
    "parse_transcript",
    "render_scenario",
    "render_transcript",
    "run_scenario",
]
