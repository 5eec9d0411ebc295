"""Physical constants and unit helpers shared across the package.

Lengths in the public API are micrometres and durations microseconds unless a
name says otherwise; frequencies are ordinary (Hz or MHz), never angular.
"""

import math

from scipy import constants as _c

E_CHARGE = _c.e
EPSILON_0 = _c.epsilon_0
HBAR = _c.hbar
AMU = _c.atomic_mass

BE9_MASS = 9.0121831 * AMU

UM = 1e-6
US = 1e-6
MHZ = 1e6


def curvature_from_frequency(freq_hz, mass=BE9_MASS, charge=E_CHARGE):
    """Second derivative of the electric potential (V/um^2) giving `freq_hz`."""
    omega = 2 * math.pi * freq_hz
    return mass * omega**2 / charge * UM**2


def frequency_from_curvature(curv_v_um2, mass=BE9_MASS, charge=E_CHARGE):
    """Inverse of :func:`curvature_from_frequency`; NaN for non-confining curvature."""
    k = curv_v_um2 / UM**2 * charge
    if k <= 0:
        return float("nan")
    return math.sqrt(k / mass) / (2 * math.pi)
