"""Configured pipelines comparing classical and quantum phase-space evolution."""

from .config import ExperimentConfig, load_config, parse_config
from .runners import (
    ComparisonReport,
    build_amplitude,
    build_basis,
    loglog_slope,
    run_convergence_sweep,
    run_equivalence,
    run_theorem_check,
)

__all__ = [
    "ComparisonReport", "ExperimentConfig", "build_amplitude", "build_basis", "load_config",
    "loglog_slope", "parse_config", "run_convergence_sweep", "run_equivalence", "run_theorem_check",
]
