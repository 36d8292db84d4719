"""Experiment harness: configuration, initial data, orchestration and plots."""

from .config import RunConfig, parse_config
from .initial import FAMILIES, initial_condition
from .runner import RunOutcome, run

__all__ = ["FAMILIES", "RunConfig", "RunOutcome", "initial_condition", "parse_config", "run"]
