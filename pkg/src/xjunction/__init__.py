"""Shuttle planning, excitation bookkeeping, sideband thermometry and
electrode-waveform synthesis for ions in an X-junction surface trap."""

from .errors import (
    ConfigurationError,
    DatasetFormatError,
    InfeasibleError,
    LibraryError,
    MissingCostError,
    RankDeficientError,
    TopologyError,
)
from .values import Measured

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "DatasetFormatError",
    "InfeasibleError",
    "LibraryError",
    "Measured",
    "MissingCostError",
    "RankDeficientError",
    "TopologyError",
]
