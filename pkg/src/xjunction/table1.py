"""Loader for the bundled table of measured transport primitives.

The data file is the single source of the primitive library, the
preparation baselines and the test sequences used to measure each cost.
Set ``XJUNCTION_TABLE1`` to load a different file with the same layout.
"""

from __future__ import annotations

import json
import os
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping

from .dynamics import (
    EndpointBaseline,
    ExcitationLedgerConfig,
    MotionalState,
    derive_primitive_excitation,
    simulate_sequence,
)
from .shuttle import PrimitiveLibrary, ShuttleSequence, TransportPrimitive
from .topology import TrapGraph, default_trap
from .values import Measured

ENV_VAR = "XJUNCTION_TABLE1"


@dataclass(frozen=True)
class TableRow:
    number: int
    primitive: str
    role: str  # "primitive", "baseline" or "reference"
    crystal: str
    chain: tuple[str, ...]
    measure_index: int
    ion: str | None
    measured: Mapping[str, Measured]
    delta_np: Measured | None
    baseline_row: int | None = None


@dataclass(frozen=True)
class Table1:
    version: str
    library: PrimitiveLibrary
    preparation: Mapping[str, MotionalState]
    rows: tuple[TableRow, ...]

    def row(self, number) -> TableRow:
        for r in self.rows:
            if r.number == number:
                return r
        raise KeyError(f"no row {number}")

    def test_sequence(self, number, full=False) -> ShuttleSequence:
        """The row's chain, cut at the configuration where the ion is measured."""
        r = self.row(number)
        chain = r.chain if full else r.chain[: r.measure_index + 1]
        return self.library.sequence(chain)

    def endpoint_baselines(self) -> tuple[EndpointBaseline, ...]:
        out = []
        for r in self.rows:
            if r.role != "baseline":
                continue
            seq = self.test_sequence(r.number)
            covers = Counter(s.name for s in seq.steps if s.cost_for(r.ion) is None)
            out.append(
                EndpointBaseline(r.ion, dict(r.measured), tuple(sorted(covers.items())), f"row {r.number}")
            )
        return tuple(out)

    def ledger_config(self, crystal="single_ion", **kwargs) -> ExcitationLedgerConfig:
        return ExcitationLedgerConfig(
            baseline=self.preparation[crystal], endpoint_baselines=self.endpoint_baselines(), **kwargs
        )

    def predict(self, number) -> Measured:
        """Ledger prediction for the measured ion and mode of a row."""
        r = self.row(number)
        if r.role == "reference" or r.ion is None:
            raise ValueError(f"row {number} has no single-ion prediction")
        report = simulate_sequence(
            self.test_sequence(number), self.ledger_config(r.crystal), ions=[r.ion]
        )
        (mode,) = r.measured
        return report.nbar(r.ion, mode)

    def derive(self, number) -> Measured:
        """Per-execution cost of the row's primitive from its measured value.

        Everything in the test prefix other than the row's own primitive is
        taken from the library; single-ion rows start from the preparation
        baseline, two-ion rows from the measured endpoint of `baseline_row`.
        """
        r = self.row(number)
        if r.role != "primitive":
            raise ValueError(f"row {number} does not measure a primitive cost")
        (mode,) = r.measured
        seq = self.test_sequence(number)
        if r.baseline_row is not None:
            baseline = self.row(r.baseline_row).measured[mode]
        else:
            baseline = self.preparation[r.crystal].occupations[mode]
        passes = 0
        known = []
        for step in seq.steps:
            if step.name == r.primitive:
                passes += 1
                continue
            cost = step.cost_for(r.ion)
            if cost and mode in cost:
                known.append(cost[mode])
        return derive_primitive_excitation(r.measured[mode], baseline, known, passes)


def _parse(data: dict, graph: TrapGraph) -> Table1:
    prims = []
    for p in data["primitives"]:
        d = dict(p)
        d.pop("rows", None)
        prims.append(TransportPrimitive.from_dict(d))
    library = PrimitiveLibrary(tuple(prims), graph)
    prep = {
        name: MotionalState({m: Measured.coerce(v) for m, v in modes.items()})
        for name, modes in data["preparation"].items()
    }
    rows = []
    for r in data["rows"]:
        rows.append(
            TableRow(
                number=int(r["number"]),
                primitive=r["primitive"],
                role=r["role"],
                crystal=r["crystal"],
                chain=tuple(r["chain"]),
                measure_index=int(r["measure_index"]),
                ion=r.get("ion"),
                measured={m: Measured.coerce(v) for m, v in r["measured"].items()},
                delta_np=None if r.get("delta_np") is None else Measured.coerce(r["delta_np"]),
                baseline_row=r.get("baseline_row"),
            )
        )
    return Table1(str(data.get("version", "")), library, prep, tuple(rows))


def load_table1(path: str | os.PathLike | None = None, graph: TrapGraph | None = None) -> Table1:
    path = path or os.environ.get(ENV_VAR)
    if path:
        text = Path(path).read_text()
    else:
        text = resources.files("xjunction").joinpath("data/table1.json").read_text()
    return _parse(json.loads(text), graph or default_trap())


def default_library() -> PrimitiveLibrary:
    return load_table1().library
