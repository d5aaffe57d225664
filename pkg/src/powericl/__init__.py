"""In-context learning harness for base-station transmit power control."""

from .config import RunConfig, load_config
from .env import NetworkConfig, NetworkState, StepOutcome, sample_state, step
from .pool import Example, ExperiencePool, SelectionResult
from .prompt import parse_reply, render
from .runner import evaluate_exhaustive, run, summarize

__version__ = "0.1.0"

__all__ = [
    "Example", "ExperiencePool", "NetworkConfig", "NetworkState", "RunConfig", "SelectionResult",
    "StepOutcome", "evaluate_exhaustive", "load_config", "parse_reply", "render", "run",
    "sample_state", "step", "summarize",
]
