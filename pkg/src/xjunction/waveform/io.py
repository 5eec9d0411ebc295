"""Waveform CSV (time_us, one column per electrode) with a JSON header file."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..errors import DatasetFormatError
from .ramps import Waveform


def save_waveform(wf: Waveform, path, extra: dict | None = None) -> tuple[Path, Path]:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_us", *wf.names])
        for t, row in zip(wf.times, wf.samples):
            w.writerow([f"{t * 1e6:.6f}", *(f"{v:.12e}" for v in row)])
    header = {
        "update_rate": wf.update_rate,
        "samples": len(wf),
        "v_max": wf.v_max,
        "electrodes": list(wf.names),
        "metadata": wf.metadata,
    }
    if extra:
        header.update(extra)
    side = path.with_suffix(".json")
    side.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    return path, side


def load_waveform(path) -> Waveform:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    rows = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        names = next(reader)[1:]
        for k, row in enumerate(reader, start=1):
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError:
                raise DatasetFormatError(f"non-numeric value in {row}", k) from None
    return Waveform(np.array(rows), tuple(names), header["update_rate"], header["v_max"], header.get("metadata", {}))
