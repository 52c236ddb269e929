"""Bilateral price-negotiation sandbox.

A deterministic alternating-offers simulator where pluggable agents
(scripted policies or remote chat models) negotiate over catalog items via
structured tool calls, plus the metric suite and RL/SFT signal preparation
computed from the machine-readable traces.
"""

__version__ = "0.1.0"

from .domain import (
    Deal,
    Listing,
    Money,
    Outcome,
    Quit,
    Regime,
    Role,
    RoundLimit,
    Scenario,
    Split,
    classify_regime,
    utilities,
)
from .engine import EngineConfig, run

__all__ = [
    "Deal",
    "EngineConfig",
    "Listing",
    "Money",
    "Outcome",
    "Quit",
    "Regime",
    "Role",
    "RoundLimit",
    "Scenario",
    "Split",
    "classify_regime",
    "run",
    "utilities",
    "__version__",
]
