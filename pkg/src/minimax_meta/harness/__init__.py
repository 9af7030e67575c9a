"""Experiment specs, CSV output and the ``minimax-meta`` command line."""

from .cli import main
from .config import ExperimentSpec, load_spec, load_suite, parse_vector
from .runner import (
    RATES_COLUMNS,
    SUMMARY_COLUMNS,
    TRACE_COLUMNS,
    fit_slope,
    format_float,
    rate_sweep,
    run_experiment,
)

__all__ = [
    "main",
    "ExperimentSpec",
    "load_spec",
    "load_suite",
    "parse_vector",
    "TRACE_COLUMNS",
    "SUMMARY_COLUMNS",
    "RATES_COLUMNS",
    "fit_slope",
    "format_float",
    "rate_sweep",
    "run_experiment",
]
