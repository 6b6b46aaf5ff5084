"""Distributed non-stochastic experts: algorithms, adversaries, simulator."""
from __future__ import annotations

__version__ = "0.1.0"

from .core import (  # noqa: F401
    CommLedger,
    ProtocolError,
    RngStream,
    RunResult,
    argmax_selector,
    compute_regret,
)
