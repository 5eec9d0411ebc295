"""Electrode waveform synthesis on a synthetic analytic electrode basis."""

from .basis import ElectrodeBasis, Kernel, RFModel, default_basis, pseudopotential
from .filters import FilterModel, apply_filter, precompensate
from .io import load_waveform, save_waveform
from .ramps import (
    QuarticWell,
    RotationReport,
    Waveform,
    axial_minima,
    sample_count,
    separation_ramp,
    well_rotation_ramp,
)
from .solver import (
    PotentialConstraints,
    Solution,
    axes_for_angle,
    directional_derivative,
    hessian_at,
    moments_at,
    solve_voltages,
)

__all__ = [
    "ElectrodeBasis",
    "FilterModel",
    "Kernel",
    "PotentialConstraints",
    "QuarticWell",
    "RFModel",
    "RotationReport",
    "Solution",
    "Waveform",
    "apply_filter",
    "axes_for_angle",
    "axial_minima",
    "default_basis",
    "directional_derivative",
    "hessian_at",
    "load_waveform",
    "moments_at",
    "precompensate",
    "pseudopotential",
    "sample_count",
    "save_waveform",
    "separation_ramp",
    "solve_voltages",
    "well_rotation_ramp",
]
