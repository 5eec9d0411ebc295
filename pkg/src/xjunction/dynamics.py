"""Motional-excitation bookkeeping, qubit phase accumulation and two-ion modes.

Excitation costs are mean-occupation increments (quanta) per execution of a
primitive.  They add linearly in value; their uncertainties add in quadrature.
"""

from __future__ import annotations

import json
import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import MissingCostError
from .shuttle import ShuttleSequence
from .topology import TrapGraph, default_trap
from .units import BE9_MASS, E_CHARGE, EPSILON_0, MHZ, UM, US
from .values import Measured

TWO_PI = 2 * math.pi


@dataclass(frozen=True)
class ModeSpec:
    label: str
    frequency_mhz: float
    axis: tuple[float, ...]

    def __post_init__(self):
        if not self.frequency_mhz > 0:
            raise ValueError(f"mode {self.label}: frequency must be > 0")
        norm = math.sqrt(sum(c * c for c in self.axis))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"mode {self.label}: axis must be a unit vector")


@dataclass(frozen=True)
class MotionalState:
    occupations: Mapping[str, Measured]
    distribution: str = "thermal"

    def __post_init__(self):
        occ = {k: Measured.coerce(v) for k, v in self.occupations.items()}
        for mode, m in occ.items():
            if m.value < 0:
                raise ValueError(f"mode {mode}: mean occupation must be >= 0")
        if self.distribution not in ("thermal", "coherent"):
            raise ValueError(f"unknown distribution {self.distribution!r}")
        object.__setattr__(self, "occupations", occ)


SINGLE_ION_BASELINE = MotionalState({"axial": Measured(0.016, 0.002)})


@dataclass(frozen=True)
class EndpointBaseline:
    """Measured occupation of `ion` after a prefix whose steps carry no cost.

    `covers` is the multiset of uncosted primitive names (as sorted
    ``(name, count)`` pairs) that the measurement stands in for.
    """

    ion: str
    occupations: Mapping[str, Measured]
    covers: tuple[tuple[str, int], ...]
    source: str = ""

    def matches(self, ion, uncosted: Counter) -> bool:
        return ion == self.ion and Counter(dict(self.covers)) == uncosted


@dataclass(frozen=True)
class ExcitationLedgerConfig:
    baseline: MotionalState = SINGLE_ION_BASELINE
    idle_heating_rate: float = 0.0  # quanta/s on each heated mode
    heated_modes: tuple[str, ...] = ("axial",)
    concatenation_penalty: Measured = Measured(0.0)  # quanta per internal step boundary
    endpoint_baselines: tuple[EndpointBaseline, ...] = ()
    missing_cost: str = "error"  # or "zero"

    def __post_init__(self):
        if self.idle_heating_rate < 0:
            raise ValueError("idle heating rate must be >= 0")
        if self.missing_cost not in ("error", "zero"):
            raise ValueError("missing_cost must be 'error' or 'zero'")
        object.__setattr__(
            self, "concatenation_penalty", Measured.coerce(self.concatenation_penalty)
        )


@dataclass(frozen=True)
class PhaseSources:
    """Detuning contributions felt by the qubits while shuttling.

    `acz_profile` maps zone label to an AC-Zeeman shift in Hz or is a callable
    of the (x, z) position in um; the shift during a step is the mean of its
    endpoint values.  The second-order Zeeman term uses the displacement from
    `reference_zone` in a uniform field gradient `b_gradient` (T/m).
    `active_window` maps ion -> (first, second) configuration indices; the ion
    accrues phase over steps and idle periods k with first <= k < second.
    Ions absent from the window map accrue over the whole sequence.
    """

    constant_detuning: float = 0.0
    acz_profile: Mapping[str, float] | Callable[[tuple[float, float]], float] | None = None
    b_gradient: float = 0.0
    c2: float = 0.305
    reference_zone: str = "S"
    active_window: Mapping[str, tuple[int, int]] | None = None

    def __post_init__(self):
        if not self.c2 > 0:
            raise ValueError("c2 must be > 0")


@dataclass
class LedgerReport:
    occupations: dict[str, dict[str, Measured]]
    phase: dict[str, float]
    notes: list[str] = field(default_factory=list)

    @property
    def phase_mod_2pi(self) -> dict[str, float]:
        return {ion: ramsey_phase_check(p)[0] for ion, p in self.phase.items()}

    def nbar(self, ion, mode="axial") -> Measured:
        return self.occupations[ion][mode]

    def to_dict(self):
        reduced = self.phase_mod_2pi
        return {
            "occupations": {
                ion: {mode: m.to_list() for mode, m in sorted(modes.items())}
                for ion, modes in sorted(self.occupations.items())
            },
            "phase_rad": {ion: self.phase[ion] for ion in sorted(self.phase)},
            "phase_mod_2pi_rad": {ion: reduced[ion] for ion in sorted(reduced)},
            "notes": list(self.notes),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d):
        occ = {
            ion: {mode: Measured.coerce(v) for mode, v in modes.items()}
            for ion, modes in d["occupations"].items()
        }
        return cls(occ, {k: float(v) for k, v in d["phase_rad"].items()}, list(d.get("notes", ())))


# --------------------------------------------------------------------------
# normal modes


def equilibrium_spacing(axial_freq_mhz: float, mass: float = BE9_MASS) -> float:
    """Two-ion equilibrium separation (um) in a harmonic well."""
    if axial_freq_mhz <= 0 or mass <= 0:
        raise ValueError("frequency and mass must be positive")
    omega = TWO_PI * axial_freq_mhz * MHZ
    d = (E_CHARGE**2 / (2 * math.pi * EPSILON_0 * mass * omega**2)) ** (1 / 3)
    return d / UM


def frequency_for_spacing(spacing_um: float, mass: float = BE9_MASS) -> float:
    """Axial frequency (MHz) at which two ions sit `spacing_um` apart."""
    if spacing_um <= 0 or mass <= 0:
        raise ValueError("spacing and mass must be positive")
    d = spacing_um * UM
    omega = math.sqrt(E_CHARGE**2 / (2 * math.pi * EPSILON_0 * mass * d**3))
    return omega / TWO_PI / MHZ


def two_ion_normal_modes(
    axial_freq_single: float, masses: Sequence[float] = (BE9_MASS, BE9_MASS)
) -> tuple[ModeSpec, ModeSpec]:
    """Axial COM and stretch modes of two ions.

    `axial_freq_single` is the frequency of a single ion of mass ``masses[0]``;
    the well's spring constant is shared by both ions.  Returned axes are the
    mass-weighted eigenvectors.
    """
    m1, m2 = (float(m) for m in masses)
    if axial_freq_single <= 0 or m1 <= 0 or m2 <= 0:
        raise ValueError("frequency and masses must be positive")
    k = m1 * (TWO_PI * axial_freq_single * MHZ) ** 2
    # Coulomb curvature at equilibrium equals the trap spring constant
    hessian = k * np.array([[2.0, -1.0], [-1.0, 2.0]])
    inv_sqrt_m = np.diag([m1**-0.5, m2**-0.5])
    evals, evecs = np.linalg.eigh(inv_sqrt_m @ hessian @ inv_sqrt_m)
    freqs = np.sqrt(evals) / TWO_PI / MHZ
    modes = []
    for label, f, v in zip(("COM", "STR"), freqs, evecs.T):
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        modes.append(ModeSpec(label, float(f), tuple(float(c) for c in v)))
    return modes[0], modes[1]


# --------------------------------------------------------------------------
# excitation and phase ledger


def second_order_zeeman_shift(delta_b_ut: float, c2: float = 0.305) -> float:
    """Quadratic Zeeman shift (Hz) for a field offset in uT."""
    return c2 * delta_b_ut**2


def ramsey_phase_check(total_phase: float) -> tuple[float, int]:
    """(phase reduced into [0, 2pi), number of whole turns removed)."""
    turns = math.floor(total_phase / TWO_PI)
    reduced = total_phase - turns * TWO_PI
    if reduced >= TWO_PI:
        reduced -= TWO_PI
        turns += 1
    if reduced < 0:
        reduced = 0.0
    return reduced, turns


def implied_window_duration(total_phase: float, detuning_hz: float) -> float:
    """Free-evolution time (s) that accrues `total_phase` at a constant detuning."""
    return total_phase / (TWO_PI * detuning_hz)


def derive_primitive_excitation(
    measured_n, baseline_n, known_contributions=(), passes: int = 2
) -> Measured:
    """Invert a test sequence with one unknown primitive run `passes` times."""
    if passes < 1:
        raise ValueError("passes must be >= 1")
    total = Measured.coerce(measured_n) - Measured.coerce(baseline_n)
    for c in known_contributions:
        total = total - Measured.coerce(c)
    result = Measured(total.value / passes, total.sigma / passes)
    if result.value < -3 * result.sigma - 1e-12:
        warnings.warn(
            f"derived excitation {result} is negative by more than 3 sigma", RuntimeWarning
        )
    return result


def _acz_at(profile, zone, graph):
    if profile is None:
        return 0.0
    if callable(profile):
        return float(profile(graph.position(zone)))
    return float(profile.get(zone, 0.0))


def _mean_square_offset(p0, p1, ref):
    """Mean of |r - ref|^2 along the straight segment p0 -> p1."""
    u0 = np.subtract(p0, ref)
    u1 = np.subtract(p1, ref)
    return float((u0 @ u0 + u0 @ u1 + u1 @ u1) / 3.0)


def _detuning(phases, graph, zone0, zone1):
    det = phases.constant_detuning
    det += 0.5 * (_acz_at(phases.acz_profile, zone0, graph) + _acz_at(phases.acz_profile, zone1, graph))
    if phases.b_gradient:
        ref = graph.position(phases.reference_zone)
        # T/m * um = uT
        msq = _mean_square_offset(graph.position(zone0), graph.position(zone1), ref)
        det += phases.c2 * phases.b_gradient**2 * msq
    return det


def simulate_sequence(
    seq: ShuttleSequence,
    config: ExcitationLedgerConfig = ExcitationLedgerConfig(),
    phases: PhaseSources | None = None,
    *,
    graph: TrapGraph | None = None,
    ions: Sequence[str] | None = None,
    initial: LedgerReport | None = None,
) -> LedgerReport:
    """Accumulate excitation and qubit phase over `seq`.

    Each ion starts from ``config.baseline`` unless `initial` (the report of
    a preceding sequence) is given.  When some steps carry no cost for an ion,
    an endpoint baseline whose `covers` equals exactly those steps replaces the
    starting occupation.  Passing `initial` continues a ledger; the boundary
    between the two sequences then counts towards the concatenation penalty.
    """
    graph = graph or default_trap()
    phases = phases or PhaseSources()
    if ions is None:
        if seq.steps:
            ions = sorted(seq.steps[0].ions)
        elif initial is not None:
            ions = sorted(initial.occupations)
        else:
            ions = ["a"]
    notes: list[str] = []
    occupations: dict[str, dict[str, Measured]] = {}
    phase_out: dict[str, float] = {}
    n_boundaries = max(len(seq.steps) - 1, 0) + (1 if initial is not None and seq.steps else 0)
    idle_s = sum(seq.idle_us) * US
    configs = seq.configurations()

    for ion in ions:
        if initial is not None and ion in initial.occupations:
            occ = dict(initial.occupations[ion])
        else:
            occ = dict(config.baseline.occupations)
        uncosted = Counter(s.name for s in seq.steps if s.cost_for(ion) is None)
        if uncosted:
            rec = next((r for r in config.endpoint_baselines if r.matches(ion, uncosted)), None)
            if rec is not None and initial is None:
                occ.update({k: Measured.coerce(v) for k, v in rec.occupations.items()})
                notes.append(f"{ion}: start replaced by measured endpoint {rec.source}".rstrip())
            elif config.missing_cost == "zero":
                notes.append(f"{ion}: uncosted steps counted as zero: {sorted(uncosted)}")
            else:
                raise MissingCostError(
                    f"ion {ion}: steps {sorted(uncosted)} have no cost and no baseline covers them"
                )
        for step in seq.steps:
            cost = step.cost_for(ion)
            if cost:
                for mode, m in cost.items():
                    occ[mode] = occ.get(mode, Measured(0.0)) + m
        for mode in config.heated_modes:
            extra = Measured(config.idle_heating_rate * idle_s)
            extra = extra + config.concatenation_penalty * n_boundaries if n_boundaries else extra
            if extra.value or extra.sigma:
                occ[mode] = occ.get(mode, Measured(0.0)) + extra
        occupations[ion] = occ

        phi = initial.phase.get(ion, 0.0) if initial is not None else 0.0
        if configs:
            first, second = 0, len(configs)
            if phases.active_window and ion in phases.active_window:
                first, second = phases.active_window[ion]
            for k, step in enumerate(seq.steps):
                if first <= k < second:
                    z0 = step.initial.placement()[ion][0]
                    z1 = step.final.placement()[ion][0]
                    phi += TWO_PI * _detuning(phases, graph, z0, z1) * step.duration_us * US
            for k, cfg in enumerate(configs):
                if first <= k < second and seq.idle_us[k]:
                    z = cfg.placement()[ion][0]
                    phi += TWO_PI * _detuning(phases, graph, z, z) * seq.idle_us[k] * US
        elif seq.idle_us[0]:
            # no configuration to place the ion: only the constant detuning applies
            phi += TWO_PI * phases.constant_detuning * seq.idle_us[0] * US
        phase_out[ion] = phi

    return LedgerReport(occupations, phase_out, notes)
