"""Latency minimization for rotatable-antenna-assisted mobile edge computing."""
from .deflection import BACKEND
from .driver import SCHEMES, RunRecord, SweepSpec, run_ao, run_benchmark, run_trial, sweep, write_csv
from .scenario import ConfigError, Scenario, load_config

__all__ = [
    "BACKEND",
    "SCHEMES",
    "ConfigError",
    "RunRecord",
    "Scenario",
    "SweepSpec",
    "load_config",
    "run_ao",
    "run_benchmark",
    "run_trial",
    "sweep",
    "write_csv",
]
