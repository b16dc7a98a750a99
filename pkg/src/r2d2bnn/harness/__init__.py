"""Experiment layer: scenario generation, metrics, benchmark grid, CLI."""

from .scenarios import Scenario, Dataset, generate_scenario
from .metrics import (
    metric_suite,
    auroc,
    aupr,
    accuracy,
    macro_f1,
    classification_entropy,
    max_probability,
)
from .idx import read_idx, write_idx
from .density import DensityDump, shrinkage_density_dump

__all__ = [
    "Scenario",
    "Dataset",
    "generate_scenario",
    "metric_suite",
    "auroc",
    "aupr",
    "accuracy",
    "macro_f1",
    "classification_entropy",
    "max_probability",
    "read_idx",
    "write_idx",
    "DensityDump",
    "shrinkage_density_dump",
]
