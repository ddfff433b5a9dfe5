"""Offline nanosatellite task scheduling: exact model, solver and SatGNN heuristics."""
from __future__ import annotations

from .model import BatteryParams, CandidateSolution, Instance, JobParams, check_feasibility, qos

__all__ = ["BatteryParams", "CandidateSolution", "Instance", "JobParams", "check_feasibility", "qos"]
__version__ = "0.1.0"
