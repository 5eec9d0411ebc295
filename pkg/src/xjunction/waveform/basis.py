"""Synthetic analytic electrode basis and RF pseudopotential in the trap plane.

Each DC electrode is modelled as a separable Gaussian kernel: one volt on
electrode e produces ``amplitude * exp(-dx^2/2sx^2 - dz^2/2sz^2)`` volts at
(x, z).  Positions are in micrometres, so a derivative of order k is in
V/um^k.  The RF field is an analytic X-shaped quadrupole with four Gaussian
bumps flanking the junction centre.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import sympy as sp
from numpy.polynomial import hermite_e

from ..units import BE9_MASS, E_CHARGE

MAX_ORDER = 4
# (order in x, order in z) for every derivative up to MAX_ORDER
MULTI_INDICES = tuple((i, k - i) for k in range(MAX_ORDER + 1) for i in range(k, -1, -1))


@dataclass(frozen=True)
class Kernel:
    name: str
    center: tuple[float, float]
    widths: tuple[float, float]
    amplitude: float = 1.0

    def __post_init__(self):
        if min(self.widths) <= 0:
            raise ValueError(f"kernel {self.name}: widths must be positive")


@dataclass(frozen=True)
class RFModel:
    voltage: float = 200.0  # V
    frequency: float = 2 * math.pi * 80e6  # rad/s
    r0: float = 200.0  # um
    core: float = 50.0  # um, softens the field zero at the junction
    bump_positions: tuple[tuple[float, float], ...] = (
        (0.0, -100.0),
        (0.0, 100.0),
        (-100.0, 0.0),
        (100.0, 0.0),
    )
    bump_width: float = 40.0  # um
    bump_height: float = 6.0  # um, equivalent field-free displacement
    mass: float = BE9_MASS
    charge: float = E_CHARGE

    def key(self):
        return (
            self.voltage,
            self.frequency,
            self.r0,
            self.core,
            tuple(tuple(p) for p in self.bump_positions),
            self.bump_width,
            self.bump_height,
            self.mass,
            self.charge,
        )


def rf_field_squared_expr(rf: RFModel, x, z):
    """|E_RF|^2 in V^2/um^2 as a sympy expression (or numeric for floats)."""
    exp = sp.exp if isinstance(x, sp.Basic) else math.exp
    g = rf.voltage / rf.r0**2
    quad = x**2 * z**2 / (x**2 + z**2 + rf.core**2)
    bumps = 0
    for bx, bz in rf.bump_positions:
        bumps += exp(-((x - bx) ** 2 + (z - bz) ** 2) / (2 * rf.bump_width**2))
    return g**2 * (quad + rf.bump_height**2 * bumps)


def pseudopotential_prefactor(rf_frequency, mass=BE9_MASS, charge=E_CHARGE):
    """Converts |E|^2 in V^2/um^2 into pseudopotential volts."""
    if rf_frequency <= 0:
        raise ValueError("RF frequency must be positive")
    return charge * 1e12 / (4 * mass * rf_frequency**2)


def pseudopotential(point, rf: RFModel | None = None, *, rf_amplitude=None, rf_frequency=None, mass=None):
    """Pseudopotential (V) at `point` = (x, z) in um.

    `rf_amplitude` overrides the electrode RF voltage, `rf_frequency` the
    angular drive frequency and `mass` the ion mass.
    """
    rf = rf or RFModel()
    if rf_amplitude is not None or rf_frequency is not None or mass is not None:
        rf = RFModel(
            voltage=rf.voltage if rf_amplitude is None else rf_amplitude,
            frequency=rf.frequency if rf_frequency is None else rf_frequency,
            r0=rf.r0,
            core=rf.core,
            bump_positions=rf.bump_positions,
            bump_width=rf.bump_width,
            bump_height=rf.bump_height,
            mass=rf.mass if mass is None else mass,
            charge=rf.charge,
        )
    x, z = (float(c) for c in point)
    return pseudopotential_prefactor(rf.frequency, rf.mass, rf.charge) * rf_field_squared_expr(rf, x, z)


@lru_cache(maxsize=16)
def _rf_derivative_functions(key):
    rf = RFModel(*key)
    x, z = sp.symbols("x z", real=True)
    expr = pseudopotential_prefactor(rf.frequency, rf.mass, rf.charge) * rf_field_squared_expr(rf, x, z)
    funcs = []
    for i, j in MULTI_INDICES:
        d = expr
        if i:
            d = sp.diff(d, x, i)
        if j:
            d = sp.diff(d, z, j)
        funcs.append(sp.lambdify((x, z), d, "math"))
    return tuple(funcs)


def _gauss_derivatives(u, width, order):
    """d^k/du^k exp(-u^2 / 2 width^2) for k = 0..order."""
    xi = u / width
    g = math.exp(-0.5 * xi * xi)
    out = []
    for k in range(order + 1):
        coef = [0.0] * k + [1.0]
        out.append((-1) ** k * hermite_e.hermeval(xi, coef) * g / width**k)
    return out


@dataclass(frozen=True)
class ElectrodeBasis:
    kernels: tuple[Kernel, ...]
    rf: RFModel = field(default_factory=RFModel)

    def __post_init__(self):
        object.__setattr__(self, "kernels", tuple(self.kernels))
        names = [k.name for k in self.kernels]
        if len(set(names)) != len(names):
            raise ValueError("electrode names must be unique")

    @property
    def names(self):
        return tuple(k.name for k in self.kernels)

    def __len__(self):
        return len(self.kernels)

    def electrode_derivatives(self, point) -> np.ndarray:
        """(n_electrodes, len(MULTI_INDICES)) derivatives of each unit potential."""
        x, z = (float(c) for c in point)
        out = np.empty((len(self.kernels), len(MULTI_INDICES)))
        for e, k in enumerate(self.kernels):
            dx = _gauss_derivatives(x - k.center[0], k.widths[0], MAX_ORDER)
            dz = _gauss_derivatives(z - k.center[1], k.widths[1], MAX_ORDER)
            for c, (i, j) in enumerate(MULTI_INDICES):
                out[e, c] = k.amplitude * dx[i] * dz[j]
        return out

    def rf_derivatives(self, point) -> np.ndarray:
        x, z = (float(c) for c in point)
        return np.array([f(x, z) for f in _rf_derivative_functions(self.rf.key())])

    def potential(self, point, voltages) -> float:
        """Total potential (V) at a point: DC electrodes plus pseudopotential."""
        v = np.asarray(voltages, dtype=float)
        return float(self.electrode_derivatives(point)[:, 0] @ v + pseudopotential(point, self.rf))

    def to_dict(self):
        rf = self.rf
        return {
            "kernels": [
                {
                    "name": k.name,
                    "center": list(k.center),
                    "widths": list(k.widths),
                    "amplitude": k.amplitude,
                }
                for k in self.kernels
            ],
            "rf": {
                "voltage": rf.voltage,
                "frequency": rf.frequency,
                "r0": rf.r0,
                "core": rf.core,
                "bump_positions": [list(p) for p in rf.bump_positions],
                "bump_width": rf.bump_width,
                "bump_height": rf.bump_height,
                "mass": rf.mass,
                "charge": rf.charge,
            },
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d):
        kernels = tuple(
            Kernel(k["name"], tuple(k["center"]), tuple(k["widths"]), float(k.get("amplitude", 1.0)))
            for k in d["kernels"]
        )
        r = dict(d.get("rf", {}))
        if "bump_positions" in r:
            r["bump_positions"] = tuple(tuple(p) for p in r["bump_positions"])
        return cls(kernels, RFModel(**r))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def default_basis(rf: RFModel | None = None) -> ElectrodeBasis:
    """Electrode pairs flanking each arm plus a ring around the junction.

    Pairs sit 120 um either side of an arm's axis every 80 um along it; each
    kernel is 80 um wide across the arm and 50 um along it.  Eight round
    kernels (50 um) on a 130 um circle give independent control at C.
    """
    kernels = []
    for k, z in enumerate(np.arange(-1300.0, -179.0, 80.0)):
        for side, x in (("w", -120.0), ("e", 120.0)):
            kernels.append(Kernel(f"S{k:02d}{side}", (x, float(z)), (80.0, 50.0)))
    for k, z in enumerate(np.arange(180.0, 1001.0, 80.0)):
        for side, x in (("w", -120.0), ("e", 120.0)):
            kernels.append(Kernel(f"H{k:02d}{side}", (x, float(z)), (80.0, 50.0)))
    for k, x in enumerate(np.arange(180.0, 701.0, 80.0)):
        for side, z in (("s", -120.0), ("n", 120.0)):
            kernels.append(Kernel(f"V{k:02d}{side}", (float(x), z), (50.0, 80.0)))
    for k in range(8):
        a = k * math.pi / 4
        kernels.append(Kernel(f"J{k}", (130.0 * math.sin(a), -130.0 * math.cos(a)), (50.0, 50.0)))
    return ElectrodeBasis(tuple(kernels), rf or RFModel())
