"""Scenario sweeps, statistics and the command-line interface."""

from .stats import RunRecord, StatsError, SweepSummary, aggregate, emit_stats, summarize_run, sweep

__all__ = ["RunRecord", "StatsError", "SweepSummary", "aggregate", "emit_stats", "summarize_run", "sweep"]
