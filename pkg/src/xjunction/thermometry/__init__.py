"""Sideband thermometry: forward flop models, synthetic data and fitting."""

from .datasets import SidebandDataset, load_dataset, save_dataset, synthesize_dataset
from .fitting import FitResult, compare_distributions, fit, initial_guess
from .models import (
    FlopModelParams,
    coherent_population,
    debye_waller,
    predict,
    rabi_frequency,
    single_ion_flop,
    thermal_population,
    three_level_populations,
    truncation,
    two_ion_flop,
    two_mode_flop,
)

__all__ = [
    "FitResult",
    "FlopModelParams",
    "SidebandDataset",
    "coherent_population",
    "compare_distributions",
    "debye_waller",
    "fit",
    "initial_guess",
    "load_dataset",
    "predict",
    "rabi_frequency",
    "save_dataset",
    "single_ion_flop",
    "synthesize_dataset",
    "thermal_population",
    "three_level_populations",
    "truncation",
    "two_ion_flop",
    "two_mode_flop",
]
