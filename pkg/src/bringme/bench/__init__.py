"""Experiment harness: grid runner, statistics, reports."""

from .report import CSV_HEADER, ReportError, emit_report, read_csv, write_csv
from .runner import ExperimentSpec, FixtureError, Fixtures, MetricsRecord, load_fixtures, run_experiment, run_single
from .stats import SummaryCell, mann_whitney_p, significance, stars, summarize

__all__ = [
    "CSV_HEADER",
    "ExperimentSpec",
    "FixtureError",
    "Fixtures",
    "MetricsRecord",
    "ReportError",
    "SummaryCell",
    "emit_report",
    "load_fixtures",
    "mann_whitney_p",
    "read_csv",
    "run_experiment",
    "run_single",
    "significance",
    "stars",
    "summarize",
    "write_csv",
]
