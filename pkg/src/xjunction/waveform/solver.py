"""Electrode voltages from potential-well constraints.

Constraints are linear equalities on derivatives of the total potential at
chosen points.  Among all voltage vectors satisfying them within the box
bounds, :func:`solve_voltages` returns the one of least Euclidean norm.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from ..errors import InfeasibleError, RankDeficientError
from ..units import BE9_MASS, E_CHARGE, curvature_from_frequency
from .basis import MULTI_INDICES, ElectrodeBasis

_INDEX = {mi: k for k, mi in enumerate(MULTI_INDICES)}
RANK_TOL = 1e-10


def moments_at(basis: ElectrodeBasis, point, voltages) -> dict[tuple[int, int], float]:
    """Derivatives of the total potential at `point`, keyed by (x order, z order)."""
    v = np.asarray(voltages, dtype=float)
    if v.shape != (len(basis),):
        raise ValueError(f"expected {len(basis)} voltages, got {v.shape}")
    total = basis.electrode_derivatives(point).T @ v + basis.rf_derivatives(point)
    return {mi: float(total[k]) for k, mi in enumerate(MULTI_INDICES)}


def axes_for_angle(angle):
    """(weak axis u, transverse axis v) as (x, z) unit vectors.

    Angle 0 points the weak axis along z; pi/2 along x.
    """
    u = (math.sin(angle), math.cos(angle))
    v = (math.cos(angle), -math.sin(angle))
    return u, v


def directional_weights(directions: Sequence[Sequence[float]]) -> np.ndarray:
    """Row over MULTI_INDICES such that row @ moments = d^k / d(dir_1)...d(dir_k)."""
    row = np.zeros(len(MULTI_INDICES))
    for combo in itertools.product((0, 1), repeat=len(directions)):
        w = 1.0
        for d, c in zip(directions, combo):
            w *= d[c]
        nx = combo.count(0)
        row[_INDEX[(nx, len(directions) - nx)]] += w
    return row


def directional_derivative(moments, directions) -> float:
    vec = np.array([moments[mi] for mi in MULTI_INDICES])
    return float(directional_weights(directions) @ vec)


@dataclass(frozen=True)
class PotentialConstraints:
    """One potential well.

    Targets are derivatives of the total potential along the weak axis u and
    transverse axis v (see :func:`axes_for_angle`) in V/um^k.  `curvature`
    is the second derivative along u; use :meth:`for_frequency` to derive it
    from a secular frequency.  Optional entries are left free when ``None``.
    """

    position: tuple[float, float]
    curvature: float
    weak_axis_angle: float = 0.0
    gradient: float = 0.0
    transverse_curvature: float | None = None
    cubic: float | None = None
    quartic: float | None = None
    require_confining: bool = True

    def __post_init__(self):
        if self.require_confining and not self.curvature > 0:
            raise ValueError("a confining well needs curvature > 0")

    @classmethod
    def for_frequency(cls, position, freq_hz, mass=BE9_MASS, charge=E_CHARGE, **kw):
        return cls(tuple(position), curvature_from_frequency(freq_hz, mass, charge), **kw)

    def rows(self):
        """(label, directions, target) for every equality this well imposes."""
        u, v = axes_for_angle(self.weak_axis_angle)
        out = [
            ("du", (u,), self.gradient),
            ("dv", (v,), 0.0),
            ("duu", (u, u), self.curvature),
            ("duv", (u, v), 0.0),
        ]
        if self.transverse_curvature is not None:
            out.append(("dvv", (v, v), self.transverse_curvature))
        if self.cubic is not None:
            out.append(("duuu", (u, u, u), self.cubic))
        if self.quartic is not None:
            out.append(("duuuu", (u, u, u, u), self.quartic))
        return out


@dataclass
class Solution:
    voltages: np.ndarray
    names: tuple[str, ...]
    at_bounds: tuple[str, ...] = ()
    residual: float = 0.0
    labels: tuple[str, ...] = field(default_factory=tuple)


def constraint_system(basis: ElectrodeBasis, wells: Sequence[PotentialConstraints]):
    """Linear system A V = b with one row per equality, plus row labels."""
    rows, rhs, labels = [], [], []
    for w_idx, well in enumerate(wells):
        d_el = basis.electrode_derivatives(well.position)
        d_rf = basis.rf_derivatives(well.position)
        for label, dirs, target in well.rows():
            wts = directional_weights(dirs)
            rows.append(d_el @ wts)
            rhs.append(target - d_rf @ wts)
            labels.append(f"well{w_idx}@({well.position[0]:g},{well.position[1]:g}):{label}")
    return np.array(rows), np.array(rhs), labels


def _min_norm(a, b):
    """Minimum-norm solution and rank of a (row-normalised) system."""
    if a.shape[1] == 0:
        return np.zeros(0), 0
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    rank = int(np.sum(s > RANK_TOL * max(s[0], 1e-300))) if s.size else 0
    x = vt[:rank].T @ ((u[:, :rank].T @ b) / s[:rank])
    return x, rank


def solve_voltages(
    basis: ElectrodeBasis,
    constraints: PotentialConstraints | Sequence[PotentialConstraints],
    v_max: float = 10.0,
    max_iter: int | None = None,
) -> Solution:
    """Least-norm voltages meeting every equality, with |V| <= v_max.

    Feasibility is settled by a linear program first.  The bounded problem
    is then solved through its dual: the optimum has the form
    V = clip(A^T lam, -v_max, v_max), and lam is found by Newton steps on
    the concave dual function.  A final re-solve with the saturated
    electrodes pinned makes the equalities hold to machine precision.
    """
    wells = [constraints] if isinstance(constraints, PotentialConstraints) else list(constraints)
    if v_max <= 0:
        raise ValueError("voltage bound must be positive")
    a, b, labels = constraint_system(basis, wells)
    norms = np.linalg.norm(a, axis=1)
    if np.any(norms == 0):
        k = int(np.argmax(norms == 0))
        if abs(b[k]) > 0:
            raise InfeasibleError(f"no electrode influences {labels[k]}", labels[k], abs(b[k]))
    norms = np.where(norms == 0, 1.0, norms)
    a_n, b_n = a / norms[:, None], b / norms
    m, n = a_n.shape
    _, rank = _min_norm(a_n, b_n)
    if rank < m:
        aug_rank = np.linalg.matrix_rank(np.column_stack([a_n, b_n]), tol=RANK_TOL * np.abs(a_n).max())
        if aug_rank > rank:
            x, _ = _min_norm(a_n, b_n)
            viol = np.abs(a_n @ x - b_n)
            k = int(np.argmax(viol))
            raise InfeasibleError(
                f"constraints are inconsistent; most violated: {labels[k]}", labels[k], float(viol[k])
            )
        raise RankDeficientError(
            f"{m - rank} redundant constraint(s) among {m}", m - rank
        )

    unbounded, _ = _min_norm(a_n, b_n)
    if np.abs(unbounded).max() <= v_max:
        return Solution(unbounded, basis.names, (), float(np.abs(a_n @ unbounded - b_n).max()), tuple(labels))

    _check_box_feasible(a_n, b_n, v_max, labels, norms)
    lam = _dual_newton(a_n, b_n, v_max, max_iter or 50 * n)
    s = a_n.T @ lam
    pinned = {i: math.copysign(v_max, s[i]) for i in range(n) if abs(s[i]) >= v_max}
    free = [i for i in range(n) if i not in pinned]
    v = np.clip(s, -v_max, v_max)
    if pinned:
        rhs = b_n - a_n[:, list(pinned)] @ np.array(list(pinned.values()))
        x, _ = _min_norm(a_n[:, free], rhs)
        # keep the polished point only if it stays inside the box
        if x.size == 0 or np.abs(x).max() <= v_max * (1 + 1e-12):
            v[free] = np.clip(x, -v_max, v_max)
    resid = np.abs(a_n @ v - b_n)
    at = tuple(basis.names[i] for i in sorted(pinned))
    return Solution(v, basis.names, at, float(resid.max()), tuple(labels))


def _check_box_feasible(a, b, v_max, labels, norms):
    """Raise InfeasibleError naming the worst constraint if no |V| <= v_max fits."""
    m, n = a.shape
    feas = linprog(np.zeros(n), A_eq=a, b_eq=b, bounds=[(-v_max, v_max)] * n, method="highs")
    if feas.status == 0:
        return
    # smallest total violation: variables are V then slacks s with |A V - b| <= s
    eye = np.eye(m)
    cost = np.r_[np.zeros(n), np.ones(m)]
    a_ub = np.block([[a, -eye], [-a, -eye]])
    b_ub = np.r_[b, -b]
    res = linprog(cost, A_ub=a_ub, b_ub=b_ub, bounds=[(-v_max, v_max)] * n + [(0, None)] * m, method="highs")
    viol = res.x[n:] if res.status == 0 else np.abs(b)
    k = int(np.argmax(viol))
    raise InfeasibleError(
        f"constraints cannot be met within +-{v_max} V; most violated: {labels[k]}",
        labels[k],
        float(viol[k] * norms[k]),
    )


def _dual_newton(a, b, v_max, max_iter):
    """Maximise the dual of min |V|^2 / 2 subject to A V = b, |V| <= v_max."""

    def dual(lam):
        s = a.T @ lam
        excess = np.maximum(np.abs(s) - v_max, 0.0)
        return b @ lam - 0.5 * np.sum(s**2) + 0.5 * np.sum(excess**2)

    lam, *_ = np.linalg.lstsq(a @ a.T, b, rcond=None)
    tol = 1e-13 * max(1.0, np.abs(b).max())
    for _ in range(max_iter):
        s = a.T @ lam
        grad = b - a @ np.clip(s, -v_max, v_max)
        if np.abs(grad).max() <= tol:
            return lam
        active = np.abs(s) < v_max
        hess = a[:, active] @ a[:, active].T
        step, *_ = np.linalg.lstsq(hess + 1e-14 * np.eye(len(b)), grad, rcond=None)
        f0, t = dual(lam), 1.0
        slope = grad @ step
        while dual(lam + t * step) < f0 + 1e-4 * t * slope and t > 1e-12:
            t *= 0.5
        lam = lam + t * step
    raise InfeasibleError("bounded solve did not converge", None, None)


def hessian_at(basis, point, voltages) -> np.ndarray:
    """2x2 Hessian of the total potential in (x, z), V/um^2."""
    mom = moments_at(basis, point, voltages)
    return np.array([[mom[(2, 0)], mom[(1, 1)]], [mom[(1, 1)], mom[(0, 2)]]])
