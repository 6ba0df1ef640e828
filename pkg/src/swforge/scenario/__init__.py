"""Scenario harness: configs, the simulated nodes and the ``swforge`` CLI."""

from __future__ import annotations

from .config import NAMED, ScenarioConfig, UsageError, load, override
from .runner import ExitReport, Simulation, run

__all__ = ["NAMED", "ExitReport", "ScenarioConfig", "Simulation", "UsageError", "load", "override", "run"]
