"""Time-dependent waveforms: well separation and well rotation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import ROUND_CEILING, Decimal
from typing import Callable, Sequence

import numpy as np

from ..units import BE9_MASS, E_CHARGE, curvature_from_frequency, frequency_from_curvature
from .basis import ElectrodeBasis
from .solver import PotentialConstraints, axes_for_angle, hessian_at, solve_voltages

UPDATE_RATE = 50e6


def sample_count(duration_s: float, update_rate: float = UPDATE_RATE) -> int:
    """ceil(duration * rate), computed in decimal so 310 us * 50 MHz is 15500."""
    if duration_s < 0 or update_rate <= 0:
        raise ValueError("duration must be >= 0 and update rate > 0")
    product = Decimal(repr(float(duration_s))) * Decimal(repr(float(update_rate)))
    return int(product.to_integral_value(rounding=ROUND_CEILING))


@dataclass
class Waveform:
    """Per-electrode voltages sampled at a fixed update rate.

    ``samples[k, e]`` is electrode e at time k / update_rate.
    """

    samples: np.ndarray
    names: tuple[str, ...]
    update_rate: float = UPDATE_RATE
    v_max: float = 10.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if self.samples.shape[1] != len(self.names):
            raise ValueError("one column per electrode is required")
        if self.update_rate <= 0:
            raise ValueError("update rate must be positive")
        if np.any(np.abs(self.samples) > self.v_max * (1 + 1e-12)):
            raise ValueError(f"samples exceed the +-{self.v_max} V bounds")

    def __len__(self):
        return self.samples.shape[0]

    @property
    def times(self):
        return np.arange(len(self)) / self.update_rate

    @property
    def duration(self):
        return len(self) / self.update_rate


def _resample(knot_s, knot_voltages, n_samples):
    s = np.linspace(0.0, 1.0, n_samples) if n_samples > 1 else np.array([1.0])
    if len(knot_s) == 1:
        return np.repeat(knot_voltages[:1], n_samples, axis=0)
    cols = [np.interp(s, knot_s, knot_voltages[:, e]) for e in range(knot_voltages.shape[1])]
    return np.column_stack(cols)


def _knots(steps):
    if steps < 1:
        raise ValueError("steps must be >= 1")
    # a single step keeps only the endpoint
    return np.array([1.0]) if steps == 1 else np.linspace(0.0, 1.0, steps)


@dataclass(frozen=True)
class QuarticWell:
    """Axial potential a*u^2 + b*u^4 + bias*u about a centre (V, u in um)."""

    alpha: float
    beta: float
    bias: float = 0.0

    @classmethod
    def harmonic(cls, freq_hz, mass=BE9_MASS, charge=E_CHARGE, bias=0.0):
        return cls(curvature_from_frequency(freq_hz, mass, charge) / 2, 0.0, bias)

    @classmethod
    def double(cls, half_separation, freq_hz, mass=BE9_MASS, charge=E_CHARGE, bias=0.0):
        """Minima at +-half_separation, each with secular frequency `freq_hz`."""
        k = curvature_from_frequency(freq_hz, mass, charge)
        return cls(-k / 4, k / (8 * half_separation**2), bias)

    def derivative(self, u, order):
        a, b, c = self.alpha, self.beta, self.bias
        if order == 1:
            return c + 2 * a * u + 4 * b * u**3
        if order == 2:
            return 2 * a + 12 * b * u**2
        if order == 3:
            return 24 * b * u
        if order == 4:
            return 24 * b
        raise ValueError("order must be 1..4")

    def interpolate(self, other, s):
        return QuarticWell(
            self.alpha + s * (other.alpha - self.alpha),
            self.beta + s * (other.beta - self.beta),
            self.bias + s * (other.bias - self.bias),
        )


def separation_constraints(center, well: QuarticWell, half_separation, angle=0.0):
    """Constraints reproducing `well` at its centre and at +-half_separation."""
    u, _ = axes_for_angle(angle)
    cons = [
        PotentialConstraints(
            tuple(center),
            well.derivative(0.0, 2),
            angle,
            gradient=well.derivative(0.0, 1),
            quartic=well.derivative(0.0, 4),
            require_confining=False,
        )
    ]
    for sgn in (-1.0, 1.0):
        d = sgn * half_separation
        pos = (center[0] + d * u[0], center[1] + d * u[1])
        cons.append(
            PotentialConstraints(
                pos,
                well.derivative(d, 2),
                angle,
                gradient=well.derivative(d, 1),
                require_confining=False,
            )
        )
    return cons


def separation_ramp(
    basis: ElectrodeBasis,
    start: QuarticWell,
    end: QuarticWell,
    steps: int,
    *,
    center=(0.0, -710.0),
    half_separation=170.0,
    duration_s=310e-6,
    update_rate=UPDATE_RATE,
    v_max=10.0,
    schedule: Callable[[float], float] | None = None,
) -> Waveform:
    """Ramp the harmonic and quartic coefficients from `start` to `end`.

    The coefficient pair (and the bias term, which shifts the crystal) is
    interpolated linearly in the schedule parameter; `schedule` maps time
    fraction to that parameter (identity by default).  Voltages solved at
    each knot are interpolated linearly onto the sample grid.
    """
    schedule = schedule or (lambda s: s)
    knots = _knots(steps)
    volts = []
    for s in knots:
        well = start.interpolate(end, schedule(float(s)))
        sol = solve_voltages(basis, separation_constraints(center, well, half_separation), v_max)
        volts.append(sol.voltages)
    samples = _resample(knots, np.array(volts), sample_count(duration_s, update_rate))
    meta = {
        "kind": "separation",
        "center_um": list(center),
        "half_separation_um": half_separation,
        "start": [start.alpha, start.beta, start.bias],
        "end": [end.alpha, end.beta, end.bias],
        "steps": steps,
    }
    return Waveform(samples, basis.names, update_rate, v_max, meta)


def axial_minima(basis, voltages, center, angle=0.0, span=400.0, step=0.25):
    """Local minima of the total potential along the weak axis through `center`."""
    u, _ = axes_for_angle(angle)
    ds = np.arange(-span, span + step / 2, step)
    pot = np.array([basis.potential((center[0] + d * u[0], center[1] + d * u[1]), voltages) for d in ds])
    idx = [k for k in range(1, len(ds) - 1) if pot[k] < pot[k - 1] and pot[k] <= pot[k + 1]]
    out = []
    for k in idx:
        # parabolic refinement
        y0, y1, y2 = pot[k - 1], pot[k], pot[k + 1]
        denom = y0 - 2 * y1 + y2
        shift = 0.5 * (y0 - y2) / denom * step if denom > 0 else 0.0
        out.append(float(ds[k] + shift))
    return out


@dataclass
class RotationReport:
    angles: np.ndarray  # requested weak-axis angle per knot, rad
    axis_angles: np.ndarray  # measured angle of the tracked mode, rad
    rotating_mhz: np.ndarray
    transverse_mhz: np.ndarray
    spectators_mhz: tuple[float, ...]
    gaps_mhz: np.ndarray
    threshold_mhz: float

    @property
    def min_gap_mhz(self) -> float:
        return float(self.gaps_mhz.min())

    @property
    def flagged(self) -> list[int]:
        return [int(k) for k in np.nonzero(self.gaps_mhz < self.threshold_mhz)[0]]

    def to_dict(self):
        return {
            "angles_rad": self.angles.tolist(),
            "axis_angles_rad": self.axis_angles.tolist(),
            "rotating_mhz": self.rotating_mhz.tolist(),
            "transverse_mhz": self.transverse_mhz.tolist(),
            "spectators_mhz": list(self.spectators_mhz),
            "gaps_mhz": self.gaps_mhz.tolist(),
            "min_gap_mhz": self.min_gap_mhz,
            "threshold_mhz": self.threshold_mhz,
            "flagged_steps": self.flagged,
        }


def well_rotation_ramp(
    basis: ElectrodeBasis,
    angle_from: float,
    angle_to: float,
    steps: int,
    *,
    position=(0.0, 0.0),
    axial_mhz=2.0,
    transverse_mhz=5.0,
    spectators_mhz: Sequence[float] = (11.0, 13.0),
    gap_threshold_mhz=0.5,
    duration_s=57e-6,
    update_rate=UPDATE_RATE,
    v_max=10.0,
) -> tuple[Waveform, RotationReport]:
    """Turn the weak axis of the well at `position` from one angle to another.

    At every knot the Hessian is re-diagonalised; the rotating mode is the
    eigenvector with the largest overlap with the previous knot's mode.  The
    gap report is the distance of its frequency from the in-plane transverse
    mode and from the out-of-plane `spectators_mhz`, which are not modelled.
    """
    knots = _knots(steps)
    k_ax = curvature_from_frequency(axial_mhz * 1e6)
    k_tr = curvature_from_frequency(transverse_mhz * 1e6)
    angles, volts, axis_angles, rot_f, tr_f, gaps = [], [], [], [], [], []
    prev = np.array(axes_for_angle(angle_from)[0])
    for s in knots:
        ang = angle_from + float(s) * (angle_to - angle_from)
        c = PotentialConstraints(tuple(position), k_ax, ang, transverse_curvature=k_tr)
        v = solve_voltages(basis, c, v_max).voltages
        evals, evecs = np.linalg.eigh(hessian_at(basis, position, v))
        j = int(np.argmax(np.abs(evecs.T @ prev)))
        vec = evecs[:, j]
        if vec @ prev < 0:
            vec = -vec
        prev = vec
        f_rot = frequency_from_curvature(evals[j]) / 1e6
        f_tr = frequency_from_curvature(evals[1 - j]) / 1e6
        others = [f_tr, *spectators_mhz]
        angles.append(ang)
        volts.append(v)
        axis_angles.append(math.atan2(vec[0], vec[1]))
        rot_f.append(f_rot)
        tr_f.append(f_tr)
        gaps.append(min(abs(f_rot - f) for f in others))
    samples = _resample(knots, np.array(volts), sample_count(duration_s, update_rate))
    meta = {
        "kind": "rotation",
        "position_um": list(position),
        "angle_from_rad": angle_from,
        "angle_to_rad": angle_to,
        "steps": steps,
    }
    report = RotationReport(
        np.array(angles),
        np.array(axis_angles),
        np.array(rot_f),
        np.array(tr_f),
        tuple(spectators_mhz),
        np.array(gaps),
        gap_threshold_mhz,
    )
    return Waveform(samples, basis.names, update_rate, v_max, meta), report
