"""Sideband-flopping datasets: synthesis and CSV + JSON-sidecar storage."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DatasetFormatError
from .models import CRYSTALS, FlopModelParams, predict

CSV_COLUMNS = ("t_us", "population", "shots")


@dataclass(frozen=True)
class SidebandDataset:
    t: np.ndarray  # seconds
    population: np.ndarray
    shots: np.ndarray
    mode: str
    kappa: int
    crystal: str = "one_ion_one_mode"
    eta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        pop = np.asarray(self.population, dtype=float)
        shots = np.asarray(self.shots, dtype=float)
        if shots.ndim == 0:
            shots = np.full_like(t, float(shots))
        if not (t.shape == pop.shape == shots.shape) or t.ndim != 1:
            raise DatasetFormatError("t, population and shots must be 1-d arrays of equal length")
        if len(t) == 0:
            raise DatasetFormatError("dataset has no points")
        for k in range(len(t)):
            if not t[k] >= 0:
                raise DatasetFormatError("duration must be >= 0", k)
            if not 0 <= pop[k] <= 1:
                raise DatasetFormatError("population must lie in [0, 1]", k)
            if not shots[k] >= 1:
                raise DatasetFormatError("shots must be >= 1", k)
        if self.kappa not in (1, -1):
            raise DatasetFormatError("sideband kappa must be +1 or -1")
        if self.crystal not in CRYSTALS:
            raise DatasetFormatError(f"unknown crystal {self.crystal!r}")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "population", pop)
        object.__setattr__(self, "shots", shots)

    @property
    def label(self):
        side = "BSB" if self.kappa == 1 else "RSB"
        return f"{self.mode}:{side}"

    @property
    def trials(self):
        """Bernoulli trials per point; each two-ion shot reports two ions."""
        return self.shots * (2 if self.crystal == "two_ions_same_species" else 1)

    def sigma(self, population=None):
        """Agresti-Coull binomial standard error (z = 1) per point.

        Evaluated at `population` (e.g. a model curve) when given, otherwise
        at the observed values.
        """
        pop = self.population if population is None else np.clip(population, 0.0, 1.0)
        z2 = 1.0
        n = self.trials
        n_adj = n + z2
        p_adj = (pop * n + z2 / 2) / n_adj
        return np.sqrt(p_adj * (1 - p_adj) / n_adj)

    def sidecar(self):
        return {
            "mode": self.mode,
            "sideband": "BSB" if self.kappa == 1 else "RSB",
            "kappa": self.kappa,
            "crystal": self.crystal,
            "eta": dict(self.eta),
        }


def synthesize_dataset(
    params: FlopModelParams,
    times,
    shots,
    seed=None,
    *,
    mode: str | None = None,
    kappa: int = 1,
    crystal: str = "one_ion_one_mode",
    analytic: bool = False,
) -> SidebandDataset:
    """Binomially sampled flop curve.

    For two-ion crystals the sampled quantity is the fraction of bright ions,
    drawn as 2 * shots Bernoulli trials.  ``analytic=True`` returns the
    noiseless curve.
    """
    mode = mode or params.modes[0]
    t = np.asarray(times, dtype=float)
    model = np.clip(predict(params, t, crystal, mode, kappa), 0.0, 1.0)
    shots_arr = np.broadcast_to(np.asarray(shots, dtype=float), t.shape).copy()
    if analytic:
        pop = model
    else:
        rng = np.random.default_rng(seed)
        trials = shots_arr.astype(int) * (2 if crystal == "two_ions_same_species" else 1)
        pop = rng.binomial(trials, model) / trials
    return SidebandDataset(t, pop, shots_arr, mode, kappa, crystal, dict(params.eta))


def save_dataset(ds: SidebandDataset, path) -> tuple[Path, Path]:
    """Write ``path`` (CSV) and ``path`` with a ``.json`` suffix (sidecar)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for t, p, s in zip(ds.t, ds.population, ds.shots):
            w.writerow([f"{t * 1e6:.6f}", f"{p:.6f}", f"{int(s)}"])
    side = path.with_suffix(".json")
    side.write_text(json.dumps(ds.sidecar(), indent=2) + "\n")
    return path, side


def load_dataset(path, sidecar=None) -> SidebandDataset:
    path = Path(path)
    side_path = Path(sidecar) if sidecar else path.with_suffix(".json")
    try:
        meta = json.loads(side_path.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"sidecar {side_path} is not valid JSON: {exc}") from None
    t, pop, shots = [], [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_COLUMNS:
            raise DatasetFormatError(f"expected header {','.join(CSV_COLUMNS)}", 0)
        for k, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != 3:
                raise DatasetFormatError("expected 3 columns", k)
            try:
                t.append(float(row[0]) * 1e-6)
                pop.append(float(row[1]))
                shots.append(float(row[2]))
            except ValueError:
                raise DatasetFormatError(f"non-numeric value in {row}", k) from None
    kappa = meta.get("kappa")
    if kappa is None:
        kappa = {"BSB": 1, "RSB": -1}.get(meta.get("sideband"))
    if kappa is None or "mode" not in meta:
        raise DatasetFormatError("sidecar needs 'mode' and 'sideband'")
    return SidebandDataset(
        np.array(t),
        np.array(pop),
        np.array(shots),
        meta["mode"],
        int(kappa),
        meta.get("crystal", "one_ion_one_mode"),
        dict(meta.get("eta", {})),
    )
