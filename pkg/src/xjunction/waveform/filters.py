"""Single-pole electrode low-pass filter and its exact discrete inverse.

The filter recurrence is y[k] = y[k-1] + alpha (x[k] - y[k-1]) with
alpha = 1 - exp(-2 pi f_c / f_s), started in steady state on the first
sample.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import lfilter

from .ramps import UPDATE_RATE, Waveform


@dataclass(frozen=True)
class FilterModel:
    cutoff: float  # Hz
    update_rate: float = UPDATE_RATE
    kind: str = "single_pole"

    def __post_init__(self):
        if self.kind != "single_pole":
            raise ValueError("only single-pole low-pass filters are supported")
        if not 0 < self.cutoff < self.update_rate / 2:
            raise ValueError("cutoff must lie in (0, update_rate / 2)")

    @property
    def alpha(self) -> float:
        return 1.0 - math.exp(-2 * math.pi * self.cutoff / self.update_rate)

    def to_dict(self):
        return {"kind": self.kind, "cutoff_hz": self.cutoff, "update_rate": self.update_rate, "alpha": self.alpha}


def filter_samples(x: np.ndarray, filt: FilterModel) -> np.ndarray:
    """Run the recurrence down axis 0."""
    x = np.asarray(x, dtype=float)
    a = filt.alpha
    zi = (1 - a) * x[:1]
    y, _ = lfilter([a], [1.0, -(1 - a)], x, axis=0, zi=zi)
    return y


def inverse_samples(w: np.ndarray, filt: FilterModel) -> np.ndarray:
    """Samples p with filter_samples(p) == w."""
    w = np.asarray(w, dtype=float)
    a = filt.alpha
    p = np.empty_like(w)
    p[0] = w[0]
    p[1:] = (w[1:] - (1 - a) * w[:-1]) / a
    return p


def _check_rate(wf, filt):
    if not math.isclose(wf.update_rate, filt.update_rate, rel_tol=1e-12):
        raise ValueError("filter and waveform update rates differ")


def apply_filter(wf: Waveform, filt: FilterModel) -> Waveform:
    _check_rate(wf, filt)
    meta = dict(wf.metadata, filtered=filt.to_dict())
    return replace(wf, samples=filter_samples(wf.samples, filt), metadata=meta)


def precompensate(wf: Waveform, filt: FilterModel) -> tuple[Waveform, int]:
    """Pre-distorted waveform and the number of samples clipped to the bounds."""
    _check_rate(wf, filt)
    p = inverse_samples(wf.samples, filt)
    clipped = int(np.count_nonzero(np.abs(p) > wf.v_max))
    if clipped:
        warnings.warn(f"{clipped} pre-compensated samples clipped to +-{wf.v_max} V", RuntimeWarning)
        p = np.clip(p, -wf.v_max, wf.v_max)
    meta = dict(wf.metadata, precompensated=filt.to_dict(), clipped_samples=clipped)
    return replace(wf, samples=p, metadata=meta), clipped
