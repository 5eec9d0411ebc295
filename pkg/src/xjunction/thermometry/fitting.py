"""Joint weighted least-squares fits of flop models to sideband datasets."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import least_squares

from .datasets import SidebandDataset
from .models import FlopModelParams, debye_waller, predict

MAX_NFEV = 200
XTOL = 1e-10
REWEIGHT_PASSES = 3
# singular values below this fraction of the largest flag an unidentifiable
# direction; finite-difference Jacobians are not trustworthy much below it
DEGENERATE_RTOL = 1e-6


def _param_names(params: FlopModelParams):
    names = ["omega", "gamma"]
    names += [f"nbar:{m}" for m in params.modes]
    names += [f"eta:{m}" for m in params.modes]
    return names


def _get(params, name):
    if name.startswith("nbar:"):
        return params.nbar[name[5:]]
    if name.startswith("eta:"):
        return params.eta[name[4:]]
    return getattr(params, name)


def _bounds(name, x0):
    if name == "omega":
        return 1e-6 * x0, np.inf
    if name == "gamma":
        return 0.0, np.inf
    if name.startswith("nbar:"):
        return 0.0, 100.0
    return 0.0, 0.99


def _scale(name, x0):
    if name == "omega":
        return x0
    if name == "gamma":
        return max(x0, 1e3)
    if name.startswith("eta:"):
        return 0.1
    return 1.0


@dataclass
class FitResult:
    params: FlopModelParams
    free: tuple[str, ...]
    covariance: np.ndarray
    chi2: float
    dof: int
    residuals: dict[str, np.ndarray]
    converged: bool = True
    message: str = ""
    nfev: int = 0
    degenerate: list[dict] = field(default_factory=list)

    @property
    def reduced_chi2(self) -> float:
        return self.chi2 / self.dof if self.dof > 0 else float("nan")

    def value(self, name) -> float:
        return _get(self.params, name)

    def sigma(self, name) -> float:
        k = self.free.index(name)
        return float(math.sqrt(max(self.covariance[k, k], 0.0)))

    def to_dict(self):
        return {
            "params": self.params.to_dict(),
            "free": list(self.free),
            "values": {n: self.value(n) for n in self.free},
            "sigma": {n: self.sigma(n) for n in self.free},
            "covariance": self.covariance.tolist(),
            "chi2": self.chi2,
            "dof": self.dof,
            "reduced_chi2": self.reduced_chi2,
            "converged": self.converged,
            "message": self.message,
            "nfev": self.nfev,
            "degenerate_directions": self.degenerate,
            "residuals": {k: v.tolist() for k, v in self.residuals.items()},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def _weighted_residuals(params, datasets, sigmas):
    out = []
    for ds, s in zip(datasets, sigmas):
        model = predict(params, ds.t, ds.crystal, ds.mode, ds.kappa)
        out.append((model - ds.population) / s)
    return out


def fit(
    datasets: Sequence[SidebandDataset],
    initial: FlopModelParams,
    free: Iterable[str] | None = None,
    weights: str = "model",
) -> FitResult:
    """Fit `initial` to all curves at once.

    `free` lists the parameters to vary (default: omega, gamma and every
    mode's nbar); the rest stay at their `initial` values.

    With ``weights="model"`` the binomial errors are re-evaluated on the
    fitted curve and the fit repeated (a few passes); errors taken from the
    observed populations correlate with the noise and bias nbar low near
    P = 1.  ``weights="data"`` keeps the observed-population errors.
    """
    if weights not in ("model", "data"):
        raise ValueError("weights must be 'model' or 'data'")
    datasets = list(datasets)
    if not datasets:
        raise ValueError("at least one dataset is required")
    names = _param_names(initial)
    free = tuple(free) if free is not None else ("omega", "gamma") + tuple(
        f"nbar:{m}" for m in initial.modes
    )
    for n in free:
        if n not in names:
            raise ValueError(f"unknown parameter {n!r}; choose from {names}")
    sigmas = [ds.sigma() for ds in datasets]
    n_points = sum(len(ds.t) for ds in datasets)

    x0 = np.array([_get(initial, n) for n in free], dtype=float)
    scale = np.array([_scale(n, v) for n, v in zip(free, x0)])
    lo = np.array([_bounds(n, v)[0] for n, v in zip(free, x0)]) / scale
    hi = np.array([_bounds(n, v)[1] for n, v in zip(free, x0)]) / scale

    def build(xs):
        return initial.with_values(**{n: float(v) for n, v in zip(free, xs * scale)})

    def residual_vector(xs):
        return np.concatenate(_weighted_residuals(build(xs), datasets, sigmas))

    if not free:
        res = _weighted_residuals(initial, datasets, sigmas)
        chi2 = float(sum(np.sum(r**2) for r in res))
        return FitResult(
            initial,
            (),
            np.zeros((0, 0)),
            chi2,
            n_points,
            {ds.label: r for ds, r in zip(datasets, res)},
            True,
            "all parameters fixed",
        )

    start = np.clip(x0 / scale, lo, hi)
    passes = REWEIGHT_PASSES if weights == "model" else 1
    nfev = 0
    for k in range(passes):
        if k:
            sigmas[:] = [
                ds.sigma(predict(best, ds.t, ds.crystal, ds.mode, ds.kappa)) for ds in datasets
            ]
        sol = least_squares(
            residual_vector,
            start,
            bounds=(lo, hi),
            method="trf",
            xtol=XTOL,
            ftol=XTOL,
            gtol=XTOL,
            max_nfev=MAX_NFEV,
        )
        nfev += sol.nfev
        best = build(sol.x)
        start = sol.x
    jac = sol.jac
    cov_s = np.linalg.pinv(jac.T @ jac)
    cov = cov_s * np.outer(scale, scale)
    cov = 0.5 * (cov + cov.T)

    degenerate = []
    _, s, vt = np.linalg.svd(jac, full_matrices=False)
    if s.size and s[0] > 0:
        for k, sv in enumerate(s):
            if sv < DEGENERATE_RTOL * s[0]:
                degenerate.append(
                    {"singular_value": float(sv), "direction": dict(zip(free, vt[k].tolist()))}
                )
    res = _weighted_residuals(best, datasets, sigmas)
    chi2 = float(sum(np.sum(r**2) for r in res))
    converged = sol.status > 0
    message = sol.message if converged else f"not converged after {sol.nfev} evaluations"
    return FitResult(
        best,
        free,
        cov,
        chi2,
        n_points - len(free),
        {ds.label: r for ds, r in zip(datasets, res)},
        converged,
        message,
        int(nfev),
        degenerate,
    )


def _first_minimum(t, pop):
    smooth = np.convolve(pop, np.ones(3) / 3, mode="same")
    smooth[0], smooth[-1] = pop[0], pop[-1]
    for k in range(1, len(t) - 1):
        if smooth[k] < 0.75 and smooth[k] <= smooth[k - 1] and smooth[k] <= smooth[k + 1]:
            return t[k]
    return t[int(np.argmin(smooth))]


def initial_guess(
    datasets: Sequence[SidebandDataset],
    eta: dict,
    distribution: str = "thermal",
) -> FlopModelParams:
    """Starting point from the data alone.

    The carrier rate comes from the first minimum of a blue-sideband curve,
    taken as half a ground-state sideband oscillation.  Each mode's nbar
    comes from the red/blue asymmetry r = (1 - P_rsb)/(1 - P_bsb) averaged
    over the early points, nbar = r / (1 - r).  That estimate is noisy for
    short curves, so the carrier rate is refined by a chi-square scan over
    +-30%, each nbar by a scan over a geometric grid, and the rate once more.
    """
    datasets = list(datasets)
    blues = [d for d in datasets if d.kappa == 1]
    ref = blues[0] if blues else datasets[0]
    order = np.argsort(ref.t)
    t_min = _first_minimum(ref.t[order], ref.population[order])
    rate = debye_waller(0, 1, eta[ref.mode])
    if ref.crystal == "two_ions_same_species":
        rate *= math.sqrt(1.5)
    omega = math.pi / (max(t_min, 1e-9) * max(rate, 1e-6))
    nbar = {}
    for mode in eta:
        red = [d for d in datasets if d.mode == mode and d.kappa == -1]
        blue = [d for d in datasets if d.mode == mode and d.kappa == 1]
        value = 0.1
        if red and blue:
            mask_r = (red[0].t > 0) & (red[0].t <= t_min / 2)
            mask_b = (blue[0].t > 0) & (blue[0].t <= t_min / 2)
            if mask_r.any() and mask_b.any():
                ex_r = 1 - red[0].population[mask_r].mean()
                ex_b = 1 - blue[0].population[mask_b].mean()
                if ex_b > 0:
                    r = min(max(ex_r / ex_b, 0.01), 0.95)
                    value = r / (1 - r)
        nbar[mode] = value
    t_max = max(float(d.t.max()) for d in datasets)
    gamma = 1.0 / (10 * t_max) if t_max > 0 else 0.0
    guess = FlopModelParams(omega, gamma, nbar, dict(eta), None, distribution)
    sigmas = [d.sigma() for d in datasets]

    def chi2(params):
        res = _weighted_residuals(params, datasets, sigmas)
        return sum(float(np.sum(r**2)) for r in res)

    def scan_omega(params):
        grid = params.omega * np.linspace(0.7, 1.3, 31)
        return params.with_values(omega=float(grid[int(np.argmin([chi2(params.with_values(omega=w)) for w in grid]))]))

    guess = scan_omega(guess)
    for mode in eta:
        grid = np.unique(np.r_[np.geomspace(0.02, 8.0, 16), guess.nbar[mode]])
        trials = [guess.with_values(**{f"nbar:{mode}": float(v)}) for v in grid]
        guess = trials[int(np.argmin([chi2(p) for p in trials]))]
    return scan_omega(guess)


def compare_distributions(datasets, initial: FlopModelParams, free=None):
    """Fit under thermal and coherent statistics.

    Returns (preferred, {distribution: FitResult}); the preferred model has
    reduced chi-square closest to 1.
    """
    from dataclasses import replace

    fits = {d: fit(datasets, replace(initial, distribution=d), free) for d in ("thermal", "coherent")}
    preferred = min(fits, key=lambda d: abs(fits[d].reduced_chi2 - 1.0))
    return preferred, fits
