"""X-junction trap array: zones, connectivity and well-configuration notation.

Configurations are written as whitespace separated tokens ``Zone_ions``, e.g.
``"S_ab"`` or ``"A_a B_b"``.  Ion order inside a well is spatial, listed in
order of increasing coordinate along the well's weak axis.  The compact form
used in print (``"A_aB_b"``) is also accepted by the parser since zone labels
are upper case and ion labels lower case.
"""

from __future__ import annotations

import heapq
import json
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

from .errors import ConfigurationError, TopologyError
from .units import BE9_MASS

ZONE_LABELS = ("L", "A", "S", "B", "R", "C", "C'", "H", "V")
REGIONS = ("S-arm", "H-arm", "V-arm", "junction")

_ZONE_RE = re.compile(r"C'|[LASBRCHV]")
_IONS_RE = re.compile(r"[a-z]+")


@dataclass(frozen=True)
class Zone:
    label: str
    position: tuple[float, float]  # (x, z) in um, y = 0 plane
    weak_axis: tuple[float, float]
    region: str

    def __post_init__(self):
        if self.label not in ZONE_LABELS:
            raise TopologyError(f"unknown zone label {self.label!r}")
        if self.region not in REGIONS:
            raise TopologyError(f"unknown region {self.region!r}")
        if abs(math.hypot(*self.weak_axis) - 1.0) > 1e-12:
            raise TopologyError(f"weak axis of {self.label} is not a unit vector")


@dataclass(frozen=True)
class Edge:
    a: str
    b: str
    path_length: float
    crosses_junction: bool = False

    def __post_init__(self):
        if not self.path_length > 0:
            raise TopologyError(f"edge {self.a}-{self.b} must have positive length")


@dataclass(frozen=True)
class IonId:
    label: str
    species: str = "Be-9"
    mass: float = BE9_MASS

    def __post_init__(self):
        if not _IONS_RE.fullmatch(self.label) or len(self.label) != 1:
            raise ConfigurationError(f"ion label must be one lower-case letter, got {self.label!r}")
        if self.species != "Be-9":
            raise ValueError("only Be-9 ions are supported")


@dataclass(frozen=True)
class TrapGraph:
    """Zones joined by transport edges.

    `rotations` pairs zones that share a position and differ only by the
    orientation of the weak axis (C and C'); they are traversed at zero
    transport length.
    """

    zones: tuple[Zone, ...]
    edges: tuple[Edge, ...]
    bump_positions: tuple[tuple[float, float], ...] = ()
    rotations: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        labels = [z.label for z in self.zones]
        if len(set(labels)) != len(labels):
            raise TopologyError("zone labels must be unique")
        known = set(labels)
        for e in self.edges:
            if e.a not in known or e.b not in known:
                raise TopologyError(f"edge {e.a}-{e.b} references an unknown zone")
        for a, b in self.rotations:
            if a not in known or b not in known:
                raise TopologyError(f"rotation {a}-{b} references an unknown zone")
            za, zb = self.zone(a), self.zone(b)
            if za.position != zb.position:
                raise TopologyError(f"rotation pair {a}/{b} must share a position")
            dot = za.weak_axis[0] * zb.weak_axis[0] + za.weak_axis[1] * zb.weak_axis[1]
            if abs(dot) > 1e-12:
                raise TopologyError(f"rotation pair {a}/{b} weak axes must be orthogonal")
        if self.zones and not self._connected():
            raise TopologyError("trap graph is not connected")

    @cached_property
    def _by_label(self):
        return {z.label: z for z in self.zones}

    @cached_property
    def _adjacency(self):
        adj = {z.label: [] for z in self.zones}
        for e in self.edges:
            adj[e.a].append((e.b, e.path_length))
            adj[e.b].append((e.a, e.path_length))
        for a, b in self.rotations:
            adj[a].append((b, 0.0))
            adj[b].append((a, 0.0))
        for nbrs in adj.values():
            nbrs.sort()
        return adj

    def zone(self, label):
        try:
            return self._by_label[label]
        except KeyError:
            raise TopologyError(f"no zone {label!r} in trap graph") from None

    def __contains__(self, label):
        return label in self._by_label

    def position(self, label):
        return self.zone(label).position

    def _connected(self):
        start = self.zones[0].label
        seen = {start}
        stack = [start]
        while stack:
            for nxt, _ in self._adjacency[stack.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return len(seen) == len(self.zones)

    def to_dict(self):
        return {
            "zones": [
                {
                    "label": z.label,
                    "position": list(z.position),
                    "weak_axis": list(z.weak_axis),
                    "region": z.region,
                }
                for z in self.zones
            ],
            "edges": [
                {
                    "a": e.a,
                    "b": e.b,
                    "path_length": e.path_length,
                    "crosses_junction": e.crosses_junction,
                }
                for e in self.edges
            ],
            "rotations": [list(r) for r in self.rotations],
            "bump_positions": [list(p) for p in self.bump_positions],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data):
        zones = tuple(
            Zone(z["label"], tuple(z["position"]), tuple(z["weak_axis"]), z["region"])
            for z in data["zones"]
        )
        edges = tuple(
            Edge(e["a"], e["b"], float(e["path_length"]), bool(e.get("crosses_junction", False)))
            for e in data["edges"]
        )
        return cls(
            zones,
            edges,
            tuple(tuple(p) for p in data.get("bump_positions", ())),
            tuple(tuple(r) for r in data.get("rotations", ())),
        )

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def default_trap() -> TrapGraph:
    """The X-junction array with the junction centre C at the origin.

    Inter-zone distances follow the one-way transport distances of the
    measured primitives: S-A 170, B-C 540 (so A-C 880), C-H 880, C'-V 540.
    L and R sit 280 um beyond A and 220 um beyond B, which puts both at least
    390 um from S.
    """
    z_axis = (0.0, 1.0)
    x_axis = (1.0, 0.0)
    zones = (
        Zone("L", (0.0, -1160.0), z_axis, "S-arm"),
        Zone("A", (0.0, -880.0), z_axis, "S-arm"),
        Zone("S", (0.0, -710.0), z_axis, "S-arm"),
        Zone("B", (0.0, -540.0), z_axis, "S-arm"),
        Zone("R", (0.0, -320.0), z_axis, "S-arm"),
        Zone("C", (0.0, 0.0), z_axis, "junction"),
        Zone("C'", (0.0, 0.0), x_axis, "junction"),
        Zone("H", (0.0, 880.0), z_axis, "H-arm"),
        Zone("V", (540.0, 0.0), x_axis, "V-arm"),
    )
    edges = (
        Edge("L", "A", 280.0),
        Edge("A", "S", 170.0),
        Edge("S", "B", 170.0),
        Edge("B", "R", 220.0),
        Edge("R", "C", 320.0, crosses_junction=True),
        Edge("C", "H", 880.0, crosses_junction=True),
        Edge("C'", "V", 540.0, crosses_junction=True),
    )
    bumps = ((0.0, -100.0), (0.0, 100.0), (-100.0, 0.0), (100.0, 0.0))
    return TrapGraph(zones, edges, bumps, (("C", "C'"),))


def path_between(graph: TrapGraph, start: str, end: str) -> tuple[list[str], float]:
    """Shortest path by summed edge length.

    Equal-length alternatives are broken by comparing the zone-label
    sequences lexicographically, so the result is deterministic.
    """
    graph.zone(start)
    graph.zone(end)
    heap = [(0.0, (start,))]
    settled = {}
    while heap:
        dist, path = heapq.heappop(heap)
        node = path[-1]
        if node in settled:
            continue
        settled[node] = (dist, path)
        if node == end:
            return list(path), dist
        for nxt, length in graph._adjacency[node]:
            if nxt not in settled and nxt not in path:
                heapq.heappush(heap, (dist + length, path + (nxt,)))
    raise TopologyError(f"zones {start} and {end} are not connected")


# --------------------------------------------------------------------------
# well configurations


@dataclass(frozen=True)
class WellConfiguration:
    entries: tuple[tuple[str, tuple[str, ...]], ...]

    def __post_init__(self):
        if not self.entries:
            raise ConfigurationError("configuration must contain at least one well")
        zones = [z for z, _ in self.entries]
        if len(set(zones)) != len(zones):
            raise ConfigurationError("duplicate zone in configuration")
        seen = set()
        for zone, ions in self.entries:
            if zone not in ZONE_LABELS:
                raise ConfigurationError(f"unknown zone label {zone!r}")
            if not ions:
                raise ConfigurationError(f"well {zone} holds no ions")
            for ion in ions:
                if ion in seen:
                    raise ConfigurationError(f"duplicate ion label {ion!r}")
                seen.add(ion)

    @classmethod
    def of(cls, mapping: Mapping[str, Iterable[str]] | Sequence[tuple[str, Iterable[str]]]):
        items = mapping.items() if isinstance(mapping, Mapping) else mapping
        return cls(tuple((z, tuple(ions)) for z, ions in items))

    @property
    def ions(self) -> frozenset[str]:
        return frozenset(i for _, ions in self.entries for i in ions)

    @property
    def zones(self) -> tuple[str, ...]:
        return tuple(z for z, _ in self.entries)

    def as_mapping(self) -> dict[str, tuple[str, ...]]:
        return dict(self.entries)

    def placement(self) -> dict[str, tuple[str, int]]:
        """ion -> (zone, 1-based slot inside the well)."""
        return {ion: (z, k + 1) for z, ions in self.entries for k, ion in enumerate(ions)}

    def same_placement(self, other: "WellConfiguration") -> bool:
        """Equality ignoring the order in which wells are listed."""
        return self.as_mapping() == other.as_mapping()

    def relabel(self, mapping: Mapping[str, str]) -> "WellConfiguration":
        return WellConfiguration(
            tuple((z, tuple(mapping.get(i, i) for i in ions)) for z, ions in self.entries)
        )

    def __str__(self):
        return format_configuration(self)


def parse_configuration(text: str) -> WellConfiguration:
    pos = 0
    n = len(text)
    entries = []
    zone_seen = set()
    ion_seen = set()
    while True:
        while pos < n and text[pos].isspace():
            pos += 1
        if pos >= n:
            break
        m = _ZONE_RE.match(text, pos)
        if not m:
            raise ConfigurationError(f"unknown zone label starting {text[pos:pos + 2]!r}", pos)
        zone, zone_at = m.group(), pos
        pos = m.end()
        if pos >= n or text[pos] != "_":
            raise ConfigurationError(f"expected '_' after zone {zone}", pos)
        pos += 1
        m = _IONS_RE.match(text, pos)
        if not m:
            raise ConfigurationError(f"empty subscript for zone {zone}", pos)
        if zone in zone_seen:
            raise ConfigurationError(f"duplicate zone {zone}", zone_at)
        zone_seen.add(zone)
        for k, ion in enumerate(m.group()):
            if ion in ion_seen:
                raise ConfigurationError(f"duplicate ion label {ion!r}", pos + k)
            ion_seen.add(ion)
        entries.append((zone, tuple(m.group())))
        pos = m.end()
        if pos < n and not (text[pos].isspace() or text[pos].isupper()):
            raise ConfigurationError(f"unexpected character {text[pos]!r}", pos)
    if not entries:
        raise ConfigurationError("empty configuration", 0)
    return WellConfiguration(tuple(entries))


def format_configuration(config: WellConfiguration) -> str:
    if not isinstance(config, WellConfiguration) or not config.entries:
        raise ConfigurationError("cannot format an empty configuration")
    return " ".join(f"{zone}_{''.join(ions)}" for zone, ions in config.entries)
