"""Sideband-flopping forward models.

Every model returns the population remaining in the initial (bright) state
after probing a sideband for duration `t` (seconds).  Oscillating terms are
multiplied by exp(-gamma t); the constant parts are not.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np
from scipy.special import eval_genlaguerre, gammaln
from scipy.stats import poisson

TAIL = 1e-8
DISTRIBUTIONS = ("thermal", "coherent")


def thermal_population(nbar, n):
    nbar = np.asarray(nbar, dtype=float)
    n = np.asarray(n)
    if np.any(nbar < 0) or np.any(n < 0):
        raise ValueError("nbar and n must be >= 0")
    # ratio form avoids overflowing nbar**n for large nbar and n
    ratio = nbar / (nbar + 1.0)
    with np.errstate(divide="ignore"):
        return np.where(nbar == 0, (n == 0).astype(float), ratio**n / (nbar + 1.0))


def coherent_population(nbar, n):
    if np.any(np.asarray(nbar) < 0):
        raise ValueError("nbar must be >= 0")
    return poisson.pmf(n, nbar)


def populations(nbar, n, distribution="thermal"):
    if distribution == "thermal":
        return thermal_population(nbar, n)
    if distribution == "coherent":
        return coherent_population(nbar, n)
    raise ValueError(f"unknown distribution {distribution!r}")


def truncation(nbar, distribution="thermal", tail=TAIL) -> int:
    """Smallest N >= 2 with total population at n >= N below `tail`."""
    if nbar <= 0:
        return 2
    if distribution == "thermal":
        # P(n >= N) = (nbar / (nbar + 1))**N
        ratio = nbar / (nbar + 1.0)
        return max(2, math.ceil(math.log(tail) / math.log(ratio)))
    n = max(2, math.ceil(nbar))
    while poisson.sf(n - 1, nbar) >= tail:
        n += 1
    return n


def debye_waller(n, kappa, eta):
    """Coupling factor |D_{n,kappa,eta}| for n -> n + kappa (0 where n + kappa < 0)."""
    n = np.asarray(n)
    if abs(kappa) > 1:
        raise ValueError("only |kappa| <= 1 is supported")
    k = abs(kappa)
    lo = np.minimum(n, n + kappa)
    hi = np.maximum(n, n + kappa)
    valid = lo >= 0
    lo_c = np.where(valid, lo, 0)
    hi_c = np.where(valid, hi, 0)
    ratio = np.exp(0.5 * (gammaln(lo_c + 1.0) - gammaln(hi_c + 1.0)))
    val = math.exp(-(eta**2) / 2) * ratio * eta**k * eval_genlaguerre(lo_c, k, eta**2)
    return np.where(valid, np.abs(val), 0.0)


def rabi_frequency(n, kappa, eta, omega):
    """Rabi rate (rad/s) on |n> -> |n + kappa>."""
    if np.any(np.asarray(n) + kappa < 0) or np.any(np.asarray(n) < 0):
        raise ValueError(f"invalid transition n={n} kappa={kappa}")
    return omega * debye_waller(n, kappa, eta)


@dataclass(frozen=True)
class FlopModelParams:
    omega: float  # carrier Rabi rate, rad/s
    gamma: float = 0.0  # 1/s
    nbar: Mapping[str, float] = field(default_factory=dict)
    eta: Mapping[str, float] = field(default_factory=dict)
    truncation: Mapping[str, int] | None = None
    distribution: str = "thermal"

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("omega must be > 0")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if set(self.nbar) != set(self.eta):
            raise ValueError("nbar and eta must name the same modes")
        for mode, v in self.nbar.items():
            if v < 0:
                raise ValueError(f"nbar[{mode}] must be >= 0")
        for mode, v in self.eta.items():
            if not 0 <= v < 1:
                raise ValueError(f"eta[{mode}] must lie in [0, 1)")
            if v > 0.5:
                warnings.warn(f"eta[{mode}] = {v} is outside the Lamb-Dicke regime", stacklevel=3)
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.distribution!r}")
        object.__setattr__(self, "nbar", {k: float(v) for k, v in self.nbar.items()})
        object.__setattr__(self, "eta", {k: float(v) for k, v in self.eta.items()})

    @property
    def modes(self):
        return tuple(self.nbar)

    def cutoff(self, mode) -> int:
        if self.truncation and mode in self.truncation:
            return int(self.truncation[mode])
        return truncation(self.nbar[mode], self.distribution)

    def with_values(self, **values):
        """Copy with entries replaced; keys like ``nbar:COM`` address one mode."""
        nbar, eta = dict(self.nbar), dict(self.eta)
        top = {}
        for key, v in values.items():
            if key.startswith("nbar:"):
                nbar[key[5:]] = v
            elif key.startswith("eta:"):
                eta[key[4:]] = v
            else:
                top[key] = v
        return replace(self, nbar=nbar, eta=eta, **top)

    def to_dict(self):
        return {
            "omega": self.omega,
            "gamma": self.gamma,
            "nbar": dict(self.nbar),
            "eta": dict(self.eta),
            "truncation": dict(self.truncation) if self.truncation else None,
            "distribution": self.distribution,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            float(d["omega"]),
            float(d.get("gamma", 0.0)),
            d["nbar"],
            d["eta"],
            d.get("truncation"),
            d.get("distribution", "thermal"),
        )


def _spectator(params, mode):
    others = [m for m in params.modes if m != mode]
    if mode not in params.nbar or len(others) != 1:
        raise ValueError(f"two-mode models need exactly one mode besides {mode!r}")
    return others[0]


def _single_sum(p, rates, t, gamma, first):
    """sum_n p_n * 1/2 [1 + cos(rate_n t) e^(-gamma t)] over the given weights."""
    t = np.asarray(t, dtype=float)
    decay = np.exp(-gamma * t)
    osc = np.cos(np.multiply.outer(t, rates)) @ p
    return first + 0.5 * (p.sum() + osc * decay)


def single_ion_flop(params: FlopModelParams, t, kappa: int, mode: str | None = None):
    mode = mode or params.modes[0]
    eta = params.eta[mode]
    cut = params.cutoff(mode)
    if kappa == 1:
        n = np.arange(cut)
        first = 0.0
    elif kappa == -1:
        n = np.arange(1, cut + 1)
        first = float(populations(params.nbar[mode], 0, params.distribution))
    else:
        raise ValueError("kappa must be +1 or -1")
    p = populations(params.nbar[mode], n, params.distribution)
    rates = rabi_frequency(n, kappa, eta, params.omega)
    return _single_sum(p, rates, t, params.gamma, first)


def _probe_grid(params, mode, kappa):
    """Probed-mode indices, spectator indices and joint weights p_nm."""
    spec = _spectator(params, mode)
    cut_p, cut_s = params.cutoff(mode), params.cutoff(spec)
    n = np.arange(cut_p) if kappa == 1 else np.arange(1, cut_p + 1)
    m = np.arange(cut_s + 1)
    p_n = populations(params.nbar[mode], n, params.distribution)
    p_m = populations(params.nbar[spec], m, params.distribution)
    p0 = float(populations(params.nbar[mode], 0, params.distribution)) * p_m.sum()
    return spec, n, m, np.outer(p_n, p_m), (0.0 if kappa == 1 else p0)


def two_mode_flop(params: FlopModelParams, t, mode: str, kappa: int):
    """One ion probed on `mode` with a second mode acting as a spectator."""
    if kappa not in (1, -1):
        raise ValueError("kappa must be +1 or -1")
    spec, n, m, pnm, first = _probe_grid(params, mode, kappa)
    d_probe = debye_waller(n, kappa, params.eta[mode])
    d_spec = debye_waller(m, 0, params.eta[spec])
    rates = params.omega * np.outer(d_probe, d_spec)
    return _single_sum(pnm.ravel(), rates.ravel(), t, params.gamma, first)


def three_level_populations(g1, g2, t, gamma=0.0):
    """|c0|^2 and |c1|^2 for the ladder start <-g1-> middle <-g2-> end.

    Arrays broadcast against each other; decay multiplies oscillating terms.
    """
    g1 = np.asarray(g1, dtype=float)
    g2 = np.asarray(g2, dtype=float)
    t = np.asarray(t, dtype=float)
    gc2 = g1**2 + g2**2
    gc = np.sqrt(gc2)
    decay = np.exp(-gamma * t)
    zero = gc2 == 0
    safe = np.where(zero, 1.0, gc2)
    a = np.where(zero, 1.0, g1**2 / safe)  # g1 -> 0 along g2 = 0
    b = np.where(zero, 0.0, g2**2 / safe)
    c2gt = np.cos(2 * gc * t) * decay
    cgt = np.cos(gc * t) * decay
    c0 = 0.5 * a**2 + 0.5 * a**2 * c2gt + 2 * a * b * cgt + b**2
    c1 = a * (0.5 - 0.5 * c2gt)
    return c0, c1


def two_ion_flop(params: FlopModelParams, t, mode: str, kappa: int):
    """Mean fluorescence of two equal ions, normalised to both bright."""
    if kappa not in (1, -1):
        raise ValueError("kappa must be +1 or -1")
    spec, n, m, pnm, first = _probe_grid(params, mode, kappa)
    eta_p, eta_s = params.eta[mode], params.eta[spec]
    d_spec = debye_waller(m, 0, eta_s)
    g1 = math.sqrt(0.5) * params.omega * np.outer(debye_waller(n, kappa, eta_p), d_spec)
    # second rung; debye_waller returns 0 when n + 2 kappa < 0
    g2 = math.sqrt(0.5) * params.omega * np.outer(debye_waller(n + kappa, kappa, eta_p), d_spec)
    t = np.asarray(t, dtype=float)
    c0, c1 = three_level_populations(
        g1.ravel()[None, :], g2.ravel()[None, :], t.reshape(-1, 1), params.gamma
    )
    out = (c0 + 0.5 * c1) @ pnm.ravel()
    return first + out.reshape(t.shape)


CRYSTALS = ("one_ion_one_mode", "one_ion_two_modes", "two_ions_same_species")


def predict(params: FlopModelParams, t, crystal: str, mode: str, kappa: int):
    if crystal == "one_ion_one_mode":
        return single_ion_flop(params, t, kappa, mode)
    if crystal == "one_ion_two_modes":
        return two_mode_flop(params, t, mode, kappa)
    if crystal == "two_ions_same_species":
        return two_ion_flop(params, t, mode, kappa)
    raise ValueError(f"unknown crystal {crystal!r}")
