"""Transport primitives and shuttle sequences.

A :class:`TransportPrimitive` maps one well configuration onto another.  The
library holds the measured primitives with canonical ion labels ``a``/``b``;
:meth:`PrimitiveLibrary.resolve` fits them onto arbitrary transitions by
relabelling ions, running them backward, adding stationary spectator wells and
chaining single-ion moves.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

from .errors import ConfigurationError, LibraryError
from .topology import TrapGraph, WellConfiguration, format_configuration, parse_configuration
from .values import Measured


class PrimitiveKind(str, enum.Enum):
    SHUTTLE = "shuttle"
    SEPARATE = "separate"
    RECOMBINE = "recombine"
    ROTATE_WELL = "rotate_well"


_REVERSE_KIND = {
    PrimitiveKind.SHUTTLE: PrimitiveKind.SHUTTLE,
    PrimitiveKind.SEPARATE: PrimitiveKind.RECOMBINE,
    PrimitiveKind.RECOMBINE: PrimitiveKind.SEPARATE,
    PrimitiveKind.ROTATE_WELL: PrimitiveKind.ROTATE_WELL,
}

Cost = Mapping[str, Mapping[str, Measured]]


def _swap_rotation(zone):
    return {"C": "C'", "C'": "C"}.get(zone, zone)


@dataclass(frozen=True)
class TransportPrimitive:
    name: str
    initial: WellConfiguration
    final: WellConfiguration
    duration_us: float
    distance_um: Mapping[str, float]
    kind: PrimitiveKind = PrimitiveKind.SHUTTLE
    # ion -> mode -> excess quanta per execution; None when not derived
    cost: Cost | None = None
    reversed: bool = False
    components: tuple[str, ...] = ()
    assumptions: tuple[str, ...] = ()

    def __post_init__(self):
        if self.initial.ions != self.final.ions:
            raise ConfigurationError(
                f"primitive {self.name}: ion sets differ between {self.initial} and {self.final}"
            )
        if not self.duration_us > 0:
            raise ValueError(f"primitive {self.name}: duration must be positive")
        kind = PrimitiveKind(self.kind)
        object.__setattr__(self, "kind", kind)
        n0, n1 = len(self.initial.entries), len(self.final.entries)
        if kind is PrimitiveKind.SEPARATE and (n1 - n0 != 1):
            raise ConfigurationError(f"separation {self.name} must split one well into two")
        if kind is PrimitiveKind.RECOMBINE and (n0 - n1 != 1):
            raise ConfigurationError(f"recombination {self.name} must merge two wells into one")
        if kind is PrimitiveKind.ROTATE_WELL:
            rotated = WellConfiguration(
                tuple((_swap_rotation(z), ions) for z, ions in self.initial.entries)
            )
            if not rotated.same_placement(self.final) or rotated == self.initial:
                raise ConfigurationError(f"rotation {self.name} must only exchange C and C'")
        for ion in self.distance_um:
            if ion not in self.initial.ions:
                raise ConfigurationError(f"primitive {self.name}: distance for unknown ion {ion}")

    @property
    def ions(self):
        return self.initial.ions

    @property
    def label(self):
        return f"{format_configuration(self.initial)} -> {format_configuration(self.final)}"

    def cost_for(self, ion):
        """Mode -> Measured cost for `ion`, or None when not available."""
        if self.cost is None:
            return None
        return self.cost.get(ion)

    def reverse(self) -> "TransportPrimitive":
        # both directions are assumed to cost the same excitation
        return replace(
            self,
            initial=self.final,
            final=self.initial,
            kind=_REVERSE_KIND[self.kind],
            reversed=not self.reversed,
            components=tuple(reversed(self.components)),
        )

    def relabel(self, mapping: Mapping[str, str]) -> "TransportPrimitive":
        cost = None
        if self.cost is not None:
            cost = {mapping.get(i, i): dict(c) for i, c in self.cost.items()}
        return replace(
            self,
            initial=self.initial.relabel(mapping),
            final=self.final.relabel(mapping),
            distance_um={mapping.get(i, i): d for i, d in self.distance_um.items()},
            cost=cost,
        )

    def with_endpoints(self, initial, final, spectator_cost: Measured | None = Measured(0.0)):
        """Same primitive acting on `initial` -> `final`, which add stationary wells.

        Spectator ions get zero distance and `spectator_cost` on their axial
        mode (``None`` leaves them uncosted).
        """
        extra = initial.ions - self.ions
        dist = dict(self.distance_um)
        cost = None if self.cost is None else {i: dict(c) for i, c in self.cost.items()}
        assumptions = self.assumptions
        for ion in sorted(extra):
            dist[ion] = 0.0
            if cost is not None and spectator_cost is not None:
                cost[ion] = {"axial": spectator_cost}
        if extra and cost is not None and spectator_cost is not None:
            assumptions = assumptions + ("spectator ions assumed unexcited",)
        return replace(
            self, initial=initial, final=final, distance_um=dist, cost=cost, assumptions=assumptions
        )

    def to_dict(self):
        d = {
            "name": self.name,
            "initial": format_configuration(self.initial),
            "final": format_configuration(self.final),
            "duration_us": self.duration_us,
            "distance_um": dict(sorted(self.distance_um.items())),
            "kind": self.kind.value,
            "reversed": self.reversed,
        }
        if self.cost is not None:
            d["cost"] = {
                ion: {mode: m.to_list() for mode, m in sorted(modes.items())}
                for ion, modes in sorted(self.cost.items())
            }
        if self.components:
            d["components"] = list(self.components)
        if self.assumptions:
            d["assumptions"] = list(self.assumptions)
        return d

    @classmethod
    def from_dict(cls, d):
        cost = d.get("cost")
        if cost is not None:
            cost = {
                ion: {mode: Measured.coerce(v) for mode, v in modes.items()}
                for ion, modes in cost.items()
            }
        return cls(
            name=d["name"],
            initial=parse_configuration(d["initial"]),
            final=parse_configuration(d["final"]),
            duration_us=float(d["duration_us"]),
            distance_um={k: float(v) for k, v in d.get("distance_um", {}).items()},
            kind=PrimitiveKind(d.get("kind", "shuttle")),
            cost=cost,
            reversed=bool(d.get("reversed", False)),
            components=tuple(d.get("components", ())),
            assumptions=tuple(d.get("assumptions", ())),
        )


def compose(first: TransportPrimitive, second: TransportPrimitive, name=None):
    """Chain two primitives into one step; costs add in quadrature."""
    if first.final != second.initial:
        raise ConfigurationError(f"cannot chain {first.label} with {second.label}")
    dist = dict(first.distance_um)
    for ion, d in second.distance_um.items():
        dist[ion] = dist.get(ion, 0.0) + d
    cost = None
    if first.cost is not None and second.cost is not None:
        cost = {}
        for ion in sorted(set(first.cost) | set(second.cost)):
            modes = {}
            for src in (first.cost.get(ion, {}), second.cost.get(ion, {})):
                for mode, m in src.items():
                    modes[mode] = modes.get(mode, Measured(0.0)) + m
            cost[ion] = modes
    kinds = {first.kind, second.kind} - {PrimitiveKind.ROTATE_WELL}
    kind = kinds.pop() if len(kinds) == 1 else PrimitiveKind.SHUTTLE
    parts = (first.components or (_component_name(first),)) + (
        second.components or (_component_name(second),)
    )
    return TransportPrimitive(
        name=name or "+".join(parts),
        initial=first.initial,
        final=second.final,
        duration_us=first.duration_us + second.duration_us,
        distance_um=dist,
        kind=kind,
        cost=cost,
        components=parts,
        assumptions=tuple(dict.fromkeys(first.assumptions + second.assumptions)),
    )


def _component_name(p):
    return f"{p.name}~" if p.reversed else p.name


# --------------------------------------------------------------------------
# sequences


@dataclass(frozen=True)
class ShuttleSequence:
    """Ordered primitives.

    `idle_us[k]` is the time spent waiting in configuration k (k = 0 is the
    start, k = len(steps) the end); `markers` maps configuration indices to
    the ion that may be addressed by laser pulses there.
    """

    steps: tuple[TransportPrimitive, ...] = ()
    idle_us: tuple[float, ...] | None = None
    markers: Mapping[int, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        idle = self.idle_us
        if idle is None:
            idle = (0.0,) * (len(self.steps) + 1)
        idle = tuple(float(x) for x in idle)
        if len(idle) != len(self.steps) + 1:
            raise ValueError("idle_us needs one entry per configuration (len(steps) + 1)")
        if any(x < 0 for x in idle):
            raise ValueError("idle durations must be >= 0")
        object.__setattr__(self, "idle_us", idle)
        object.__setattr__(self, "markers", dict(self.markers))

    def __len__(self):
        return len(self.steps)

    def __add__(self, other: "ShuttleSequence") -> "ShuttleSequence":
        joint = self.idle_us[-1] + other.idle_us[0]
        idle = self.idle_us[:-1] + (joint,) + other.idle_us[1:]
        markers = dict(self.markers)
        for k, ion in other.markers.items():
            markers[k + len(self.steps)] = ion
        return ShuttleSequence(self.steps + other.steps, idle, markers)

    def configurations(self) -> list[WellConfiguration]:
        if not self.steps:
            return []
        return [self.steps[0].initial] + [s.final for s in self.steps]

    def chain(self) -> str:
        return " -> ".join(format_configuration(c) for c in self.configurations())

    def to_dict(self):
        return {
            "chain": [format_configuration(c) for c in self.configurations()],
            "steps": [s.to_dict() for s in self.steps],
            "idle_us": list(self.idle_us),
            "markers": {str(k): v for k, v in sorted(self.markers.items())},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d):
        steps = tuple(TransportPrimitive.from_dict(s) for s in d.get("steps", ()))
        return cls(
            steps,
            tuple(d["idle_us"]) if "idle_us" in d else None,
            {int(k): v for k, v in d.get("markers", {}).items()},
        )

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    boundary: int | None = None
    expected: WellConfiguration | None = None
    found: WellConfiguration | None = None
    message: str = ""

    def __bool__(self):
        return self.ok


def validate_sequence(seq: ShuttleSequence) -> ValidationReport:
    """Check contiguity; boundary k sits between step k-1 and step k."""
    if not seq.steps:
        return ValidationReport(True, message="empty sequence")
    ions = seq.steps[0].initial.ions
    for k in range(1, len(seq.steps)):
        prev, cur = seq.steps[k - 1], seq.steps[k]
        if prev.final != cur.initial:
            return ValidationReport(
                False,
                k,
                prev.final,
                cur.initial,
                f"boundary {k}: step {k - 1} ends in {prev.final} but step {k} starts in "
                f"{cur.initial}",
            )
        if cur.ions != ions:
            return ValidationReport(False, k, prev.final, cur.initial, "ion set changed")
    return ValidationReport(True)


def reverse_sequence(seq: ShuttleSequence) -> ShuttleSequence:
    n = len(seq.steps)
    return ShuttleSequence(
        tuple(s.reverse() for s in reversed(seq.steps)),
        tuple(reversed(seq.idle_us)),
        {n - k: ion for k, ion in seq.markers.items()},
    )


@dataclass(frozen=True)
class Placement:
    start: tuple[str, int]
    end: tuple[str, int]


def net_permutation(seq: ShuttleSequence) -> dict[str, Placement]:
    """Start and end (zone, slot) of every ion; empty for an empty sequence."""
    if not seq.steps:
        return {}
    first = seq.steps[0].initial.placement()
    last = seq.steps[-1].final.placement()
    return {ion: Placement(first[ion], last[ion]) for ion in sorted(first)}


def is_identity(perm: Mapping[str, Placement]) -> bool:
    return all(p.start == p.end for p in perm.values())


def totals(seq: ShuttleSequence) -> tuple[float, dict[str, float]]:
    duration = sum(s.duration_us for s in seq.steps) + sum(seq.idle_us)
    dist: dict[str, float] = {}
    for s in seq.steps:
        for ion in sorted(s.ions):
            dist[ion] = dist.get(ion, 0.0) + s.distance_um.get(ion, 0.0)
    return duration, dist


# --------------------------------------------------------------------------
# library


@dataclass(frozen=True)
class PrimitiveLibrary:
    primitives: tuple[TransportPrimitive, ...]
    graph: TrapGraph | None = None

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))
        names = [p.name for p in self.primitives]
        if len(set(names)) != len(names):
            raise ValueError("primitive names must be unique")
        if self.graph is not None:
            for p in self.primitives:
                for z in p.initial.zones + p.final.zones:
                    if z not in self.graph:
                        raise ValueError(f"primitive {p.name} uses zone {z} missing from graph")

    def __getitem__(self, name) -> TransportPrimitive:
        for p in self.primitives:
            if p.name == name:
                return p
        raise LibraryError(f"no primitive named {name!r}")

    def __contains__(self, name):
        return any(p.name == name for p in self.primitives)

    def _single_ion(self):
        return [
            p
            for p in self.primitives
            if len(p.ions) == 1 and len(p.initial.entries) == 1 and len(p.final.entries) == 1
        ]

    def resolve(self, initial, final) -> TransportPrimitive:
        """A primitive taking exactly `initial` to `final`."""
        if isinstance(initial, str):
            initial = parse_configuration(initial)
        if isinstance(final, str):
            final = parse_configuration(final)
        if initial.ions != final.ions:
            raise ConfigurationError(f"{initial} -> {final} changes the ion set")
        if initial.same_placement(final):
            raise LibraryError(f"{initial} -> {final} is not a transport")
        fmap = final.as_mapping()
        stationary = [e for e in initial.entries if fmap.get(e[0]) == e[1]]
        # smallest spectator set first: prefer primitives measured in full context
        for r in range(len(stationary) + 1):
            for spect in itertools.combinations(stationary, r):
                sub0 = _drop(initial, spect)
                sub1 = _drop(final, spect)
                if sub0 is None or sub1 is None:
                    continue
                for p in self.primitives:
                    for cand in (p, p.reverse()):
                        m = _match(cand, sub0, sub1)
                        if m is not None:
                            return m.with_endpoints(initial, final)
        moving = [e for e in initial.entries if e not in stationary]
        dest = [e for e in final.entries if e not in stationary]
        if len(moving) == 1 and len(dest) == 1 and moving[0][1] == dest[0][1]:
            (ion,) = moving[0][1] if len(moving[0][1]) == 1 else (None,)
            route = self._route(moving[0][0], dest[0][0]) if ion else None
            if route:
                prim = route[0]
                for nxt in route[1:]:
                    prim = compose(prim, nxt)
                if ion != "a":
                    prim = prim.relabel({"a": ion})
                return prim.with_endpoints(initial, final)
        raise LibraryError(
            f"library has no primitive for {format_configuration(initial)} -> "
            f"{format_configuration(final)}"
        )

    def _route(self, start, end):
        """Fewest-duration chain of single-ion primitives from zone `start` to `end`."""
        edges: dict[str, list[tuple[str, TransportPrimitive]]] = {}
        for p in self._single_ion():
            for cand in (p, p.reverse()):
                src = cand.initial.zones[0]
                dst = cand.final.zones[0]
                ion = next(iter(cand.ions))
                if ion != "a":
                    cand = cand.relabel({ion: "a"})
                edges.setdefault(src, []).append((dst, cand))
        heap = [(0.0, (start,), ())]
        done = set()
        while heap:
            t, zones, prims = heapq.heappop(heap)
            node = zones[-1]
            if node == end:
                return list(prims)
            if node in done:
                continue
            done.add(node)
            for dst, cand in edges.get(node, ()):
                if dst not in done:
                    heapq.heappush(heap, (t + cand.duration_us, zones + (dst,), prims + (cand,)))
        return None

    def sequence(self, chain: Sequence[str | WellConfiguration], idle_us=None, markers=None):
        """Resolve a chain of configurations into a :class:`ShuttleSequence`."""
        configs = [parse_configuration(c) if isinstance(c, str) else c for c in chain]
        steps = tuple(self.resolve(a, b) for a, b in zip(configs, configs[1:]))
        return ShuttleSequence(steps, idle_us, markers or {})


def _drop(config, spectators):
    remaining = tuple(e for e in config.entries if e not in spectators)
    if not remaining:
        return None
    return WellConfiguration(remaining)


def _match(prim, sub0, sub1):
    """`prim` relabelled to act as sub0 -> sub1 (wells in any order), or None."""
    if len(prim.ions) != len(sub0.ions):
        return None
    if len(prim.initial.entries) != len(sub0.entries):
        return None
    src = sorted(prim.ions)
    for perm in itertools.permutations(sorted(sub0.ions)):
        mapping = dict(zip(src, perm))
        cand = prim.relabel(mapping)
        if cand.initial.same_placement(sub0) and cand.final.same_placement(sub1):
            return cand
    return None


# --------------------------------------------------------------------------
# the measured sequences

REORDER_CHAIN = (
    "S_{a}{b}",
    "A_{a} B_{b}",
    "A_{a} C_{b}",
    "A_{a} V_{b}",
    "C_{a} V_{b}",
    "H_{a} V_{b}",
    "H_{a} C_{b}",
    "H_{a} A_{b}",
    "C_{a} A_{b}",
    "B_{a} A_{b}",
    "S_{b}{a}",
)

ADDRESS_CHAIN = ("A_{a} B_{b}", "S_{a} R_{b}", "A_{a} B_{b}", "L_{a} S_{b}", "A_{a} B_{b}")


def _fill(chain, a, b):
    return [c.format(a=a, b=b) for c in chain]


def _check_ions(ions):
    ions = tuple(ions)
    if len(ions) != 2 or len(set(ions)) != 2:
        raise ConfigurationError(f"exactly two distinct ions are required, got {ions}")
    return ions


def compile_reorder(ions: Sequence[str], library: PrimitiveLibrary) -> ShuttleSequence:
    """Swap two ions held together in S by routing them around the junction."""
    a, b = _check_ions(ions)
    seq = library.sequence(_fill(REORDER_CHAIN, a, b))
    report = validate_sequence(seq)
    if not report:
        raise ConfigurationError(report.message)
    return seq


def compile_individual_address(
    target: str, library: PrimitiveLibrary, ions: Sequence[str] = ("a", "b")
) -> ShuttleSequence:
    """Bring each ion of a separated pair into S in turn, and back.

    Markers flag the two configurations where the ion sitting in S can be
    addressed; the marker for `target` is the one at which it is in S.
    """
    i, j = _check_ions(ions)
    if target not in (i, j):
        raise ConfigurationError(f"target ion {target!r} is not one of {ions}")
    seq = library.sequence(_fill(ADDRESS_CHAIN, i, j), markers={1: i, 3: j})
    report = validate_sequence(seq)
    if not report:
        raise ConfigurationError(report.message)
    return seq


def address_marker(seq: ShuttleSequence, target: str) -> int:
    """Configuration index at which `target` may be addressed."""
    for k, ion in sorted(seq.markers.items()):
        if ion == target:
            return k
    raise KeyError(target)
