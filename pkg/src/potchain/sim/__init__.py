"""Deterministic simulation harness."""

from .config import (
    ConfigInvalid,
    FaultEvent,
    SimConfig,
    build_config,
    format_scenario,
    load_config,
    load_scenario,
    parse_config_text,
    parse_scenario,
)
from .engine import Metrics, Simulation, Trace, block_timing_ok, export, run
from .rfts import GameTrace, TooFewPlayers, rfts_scenario

__all__ = [name for name in dir() if not name.startswith("_")]
