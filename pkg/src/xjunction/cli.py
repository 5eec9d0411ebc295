"""Command-line front end.

Exit codes: 0 success, 1 I/O error, 2 validation error, 3 infeasible
constraints or a fit that did not converge.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import re
import sys
import warnings
from pathlib import Path

import numpy as np

from .errors import (
    ConfigurationError,
    DatasetFormatError,
    InfeasibleError,
    LibraryError,
    MissingCostError,
    RankDeficientError,
    TopologyError,
)

EXIT_OK, EXIT_IO, EXIT_VALIDATION, EXIT_INFEASIBLE = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _parse_duration(text: str) -> float:
    m = re.fullmatch(r"\s*([0-9.eE+-]+)\s*(s|ms|us|ns)?\s*", text)
    if not m:
        raise UsageError(f"cannot parse duration {text!r}")
    scale = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9, None: 1.0}[m.group(2)]
    return float(m.group(1)) * scale


def _parse_mode_values(text: str, default_mode: str) -> dict[str, float]:
    """'1.7' -> {default_mode: 1.7}; 'COM=0.55,STR=0.43' -> both."""
    out = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" in part:
            k, v = part.split("=", 1)
            out[k.strip()] = float(v)
        else:
            out[default_mode] = float(part)
    if not out:
        raise UsageError(f"no values in {text!r}")
    return out


def _ion_list(text: str) -> list[str]:
    return [s.strip() for s in text.split(",") if s.strip()]


# --------------------------------------------------------------------------
# plan


def cmd_plan(args) -> int:
    from .shuttle import compile_individual_address, compile_reorder
    from .table1 import load_table1

    library = load_table1().library
    ions = _ion_list(args.ions)
    if args.kind == "reorder":
        if len(ions) != 2:
            raise UsageError("reorder needs exactly two ions, e.g. --ions a,b")
        seq = compile_reorder(ions, library)
    else:
        if args.target is None:
            raise UsageError("address needs --target")
        seq = compile_individual_address(args.target, library, ions)
    if args.out:
        Path(args.out).write_text(seq.to_json() + "\n")
    sys.stdout.write(seq.chain() + "\n")
    return EXIT_OK


# --------------------------------------------------------------------------
# simulate


def _table_check_rows(table):
    rows = []
    for r in table.rows:
        if r.role == "reference":
            continue
        pred = table.predict(r.number)
        (mode,) = r.measured
        meas = r.measured[mode]
        ok = abs(pred.value - meas.value) <= meas.sigma + 1e-12
        rows.append((r.number, r.ion, mode, pred, meas, ok))
    return rows


def cmd_simulate(args) -> int:
    from .dynamics import ExcitationLedgerConfig, PhaseSources, simulate_sequence
    from .shuttle import ShuttleSequence, validate_sequence
    from .table1 import load_table1

    table = load_table1(args.table1)
    if args.row is not None:
        seq = table.test_sequence(args.row)
        crystal = table.row(args.row).crystal
    elif args.seq:
        seq = ShuttleSequence.from_json(Path(args.seq).read_text())
        crystal = "single_ion" if not seq.steps or len(seq.steps[0].ions) == 1 else "two_ion"
    else:
        raise UsageError("give --seq FILE or --row N")
    report_v = validate_sequence(seq)
    if not report_v:
        sys.stderr.write(f"invalid sequence: {report_v.message}\n")
        return EXIT_VALIDATION
    # separated ions are tracked per ion on their own axial mode
    baseline = table.preparation["single_ion"]
    config = ExcitationLedgerConfig(
        baseline=baseline,
        idle_heating_rate=args.idle_rate,
        concatenation_penalty=args.penalty,
        endpoint_baselines=table.endpoint_baselines(),
        missing_cost=args.missing_cost,
    )
    phases = PhaseSources(constant_detuning=args.detuning)
    ions = _ion_list(args.ions) if args.ions else None
    try:
        report = simulate_sequence(seq, config, phases, ions=ions)
    except MissingCostError as exc:
        if not args.check_table1:
            raise
        # the table check stands on its own; report why the ledger is incomplete
        report = None
        out = {"ledger_error": str(exc)}
    else:
        out = report.to_dict()
    ok = True
    if args.check_table1:
        checks = []
        for number, ion, mode, pred, meas, passed in _table_check_rows(table):
            checks.append(
                {
                    "row": number,
                    "ion": ion,
                    "mode": mode,
                    "predicted": pred.to_list(),
                    "measured": meas.to_list(),
                    "pass": passed,
                }
            )
            ok &= passed
        out["table1_check"] = checks
    _emit(_dumps(out), args.out)
    if args.csv and report is not None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["ion", "mode", "nbar", "sigma", "phase_rad", "phase_mod_2pi_rad"])
        reduced = report.phase_mod_2pi
        for ion in sorted(report.occupations):
            for mode, m in sorted(report.occupations[ion].items()):
                w.writerow([ion, mode, f"{m.value:.9f}", f"{m.sigma:.9f}", f"{report.phase[ion]:.9f}", f"{reduced[ion]:.9f}"])
        Path(args.csv).write_text(buf.getvalue())
    return EXIT_OK if ok else EXIT_VALIDATION


# --------------------------------------------------------------------------
# thermometry


def _model_params(nbar, eta, omega_khz, gamma, distribution):
    from .thermometry import FlopModelParams

    if set(nbar) != set(eta):
        raise UsageError(f"--nbar modes {sorted(nbar)} and --eta modes {sorted(eta)} differ")
    return FlopModelParams(2 * math.pi * omega_khz * 1e3, gamma, nbar, eta, None, distribution)


def cmd_synth(args) -> int:
    from .thermometry import save_dataset, synthesize_dataset

    nbar = _parse_mode_values(args.nbar, args.mode)
    eta = _parse_mode_values(args.eta, args.mode)
    params = _model_params(nbar, eta, args.omega_khz, args.gamma, args.distribution)
    t = np.linspace(0.0, args.t_max_us * 1e-6, args.points)
    probe = [m for m in nbar] if args.probe == "all" else [args.probe or args.mode]
    written = []
    seed = np.random.SeedSequence(args.seed)
    children = iter(seed.spawn(2 * len(probe)))
    for mode in probe:
        for kappa, side in ((1, "bsb"), (-1, "rsb")):
            ds = synthesize_dataset(
                params, t, args.shots, next(children), mode=mode, kappa=kappa, crystal=args.crystal
            )
            path = Path(f"{args.out}_{mode}_{side}.csv")
            save_dataset(ds, path)
            written.append(str(path))
    sys.stdout.write("\n".join(written) + "\n")
    return EXIT_OK


def cmd_fit(args) -> int:
    from dataclasses import replace

    from .thermometry import fit, initial_guess, load_dataset

    datasets = [load_dataset(p) for p in args.data]
    eta = {}
    for ds in datasets:
        eta.update(ds.eta)
    if args.eta:
        eta.update(_parse_mode_values(args.eta, datasets[0].mode))
    if not eta:
        raise UsageError("Lamb-Dicke parameters missing: give --eta or include them in the sidecar")
    guess = initial_guess(datasets, eta, args.distribution)
    free = args.free.split(",") if args.free else None
    if args.fix_all:
        free = []
    result = fit(datasets, replace(guess, distribution=args.distribution), free)
    out = result.to_dict()
    out["datasets"] = [str(p) for p in args.data]
    _emit(_dumps(out), args.out)
    if args.residuals:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["curve", "t_us", "population", "model", "weighted_residual"])
        from .thermometry import predict

        for ds in datasets:
            model = predict(result.params, ds.t, ds.crystal, ds.mode, ds.kappa)
            for t, p, mval, r in zip(ds.t, ds.population, model, result.residuals[ds.label]):
                w.writerow([ds.label, f"{t * 1e6:.6f}", f"{p:.6f}", f"{mval:.9f}", f"{r:.9f}"])
        Path(args.residuals).write_text(buf.getvalue())
    return EXIT_OK if result.converged else EXIT_INFEASIBLE


# --------------------------------------------------------------------------
# waveform


def cmd_waveform(args) -> int:
    from .units import curvature_from_frequency
    from .waveform import (
        FilterModel,
        PotentialConstraints,
        QuarticWell,
        apply_filter,
        default_basis,
        precompensate,
        save_waveform,
        separation_ramp,
        solve_voltages,
        well_rotation_ramp,
    )
    from .waveform.basis import ElectrodeBasis

    basis = ElectrodeBasis.from_json(Path(args.basis).read_text()) if args.basis else default_basis()
    extra = {}
    if args.kind == "well":
        pos = tuple(float(c) for c in args.position.split(","))
        c = PotentialConstraints.for_frequency(pos, args.freq_mhz * 1e6, weak_axis_angle=math.radians(args.angle_deg))
        sol = solve_voltages(basis, c, args.v_max)
        out = {
            "position_um": list(pos),
            "curvature_v_per_um2": curvature_from_frequency(args.freq_mhz * 1e6),
            "voltages": dict(zip(sol.names, sol.voltages.tolist())),
            "at_bounds": list(sol.at_bounds),
        }
        _emit(_dumps(out), args.out)
        return EXIT_OK
    duration = _parse_duration(args.duration) if args.duration else None
    if args.kind == "separate":
        wf = separation_ramp(
            basis,
            QuarticWell.harmonic(args.start_mhz * 1e6),
            QuarticWell.double(args.half_separation, args.end_mhz * 1e6),
            args.steps,
            half_separation=args.half_separation,
            duration_s=duration if duration is not None else 310e-6,
            update_rate=args.update_rate,
            v_max=args.v_max,
        )
    else:
        wf, report = well_rotation_ramp(
            basis,
            math.radians(args.angle_from),
            math.radians(args.angle_to),
            args.steps,
            duration_s=duration if duration is not None else 57e-6,
            update_rate=args.update_rate,
            v_max=args.v_max,
        )
        extra["rotation_report"] = report.to_dict()
    if args.cutoff_mhz:
        filt = FilterModel(args.cutoff_mhz * 1e6, args.update_rate)
        extra["filter"] = filt.to_dict()
        if args.precompensate:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                wf, clipped = precompensate(wf, filt)
            extra["clipped_samples"] = clipped
            check = apply_filter(wf, filt)
            extra["filtered_output_first"] = check.samples[0].tolist()
    if args.out:
        save_waveform(wf, args.out, extra)
    sys.stdout.write(f"samples {len(wf)}\nupdate_rate {wf.update_rate:.0f}\nelectrodes {len(wf.names)}\n")
    return EXIT_OK


# --------------------------------------------------------------------------
# topology


def cmd_topology(args) -> int:
    from .topology import default_trap, path_between

    graph = default_trap()
    if args.path:
        a, b = args.path
        zones, length = path_between(graph, a, b)
        sys.stdout.write(f"{' -> '.join(zones)}\t{length:.3f}\n")
        return EXIT_OK
    _emit(graph.to_json() + "\n", args.out)
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="xjunction", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("plan", help="compile a shuttle sequence")
    sp.add_argument("kind", choices=("reorder", "address"))
    sp.add_argument("--ions", default="a,b")
    sp.add_argument("--target")
    sp.add_argument("--out", help="write the sequence JSON here")
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("simulate", help="excitation and phase ledger of a sequence")
    sp.add_argument("--seq", help="sequence JSON written by 'plan'")
    sp.add_argument("--row", type=int, help="use the test sequence of a table row")
    sp.add_argument("--ions", help="comma-separated ions to report")
    sp.add_argument("--check-table1", action="store_true")
    sp.add_argument("--table1", help="table data file (default: bundled)")
    sp.add_argument("--idle-rate", type=float, default=0.0, help="quanta/s while idle")
    sp.add_argument("--penalty", type=float, default=0.0, help="quanta per step boundary")
    sp.add_argument("--detuning", type=float, default=0.0, help="constant qubit detuning, Hz")
    sp.add_argument("--missing-cost", choices=("error", "zero"), default="error")
    sp.add_argument("--out")
    sp.add_argument("--csv")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("synth", help="synthesize sideband flopping data")
    sp.add_argument("--nbar", required=True, help="value or MODE=VAL,...")
    sp.add_argument("--eta", default="0.35", help="value or MODE=VAL,...")
    sp.add_argument("--mode", default="axial", help="mode name for bare values")
    sp.add_argument("--probe", help="probed mode, or 'all'")
    sp.add_argument("--crystal", default="one_ion_one_mode",
                    choices=("one_ion_one_mode", "one_ion_two_modes", "two_ions_same_species"))
    sp.add_argument("--omega-khz", type=float, default=250.0)
    sp.add_argument("--gamma", type=float, default=2e3)
    sp.add_argument("--distribution", choices=("thermal", "coherent"), default="thermal")
    sp.add_argument("--t-max-us", type=float, default=40.0)
    sp.add_argument("--points", type=int, default=41)
    sp.add_argument("--shots", type=int, default=250)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True, help="output prefix")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("fit", help="fit flop models to datasets")
    sp.add_argument("data", nargs="+", help="dataset CSV files (sidecar JSON alongside)")
    sp.add_argument("--eta", help="override Lamb-Dicke parameters, MODE=VAL,...")
    sp.add_argument("--distribution", choices=("thermal", "coherent"), default="thermal")
    sp.add_argument("--free", help="comma-separated free parameters")
    sp.add_argument("--fix-all", action="store_true")
    sp.add_argument("--out")
    sp.add_argument("--residuals")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("waveform", help="solve electrode waveforms")
    sp.add_argument("kind", choices=("separate", "rotate", "well"))
    sp.add_argument("--duration", help="e.g. 310us")
    sp.add_argument("--steps", type=int, default=11)
    sp.add_argument("--update-rate", type=float, default=50e6)
    sp.add_argument("--v-max", type=float, default=10.0)
    sp.add_argument("--basis", help="basis JSON (default: synthetic X-junction basis)")
    sp.add_argument("--start-mhz", type=float, default=2.5)
    sp.add_argument("--end-mhz", type=float, default=1.5)
    sp.add_argument("--half-separation", type=float, default=170.0)
    sp.add_argument("--angle-from", type=float, default=0.0, help="degrees")
    sp.add_argument("--angle-to", type=float, default=90.0, help="degrees")
    sp.add_argument("--position", default="0,-710")
    sp.add_argument("--freq-mhz", type=float, default=3.6)
    sp.add_argument("--angle-deg", type=float, default=0.0)
    sp.add_argument("--cutoff-mhz", type=float)
    sp.add_argument("--precompensate", action="store_true")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_waveform)

    sp = sub.add_parser("topology", help="print the trap graph or a shortest path")
    sp.add_argument("--path", nargs=2, metavar=("FROM", "TO"))
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_topology)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_IO
    except (InfeasibleError, RankDeficientError) as exc:
        sys.stderr.write(f"infeasible: {exc}\n")
        return EXIT_INFEASIBLE
    except (
        UsageError,
        ConfigurationError,
        LibraryError,
        MissingCostError,
        TopologyError,
        DatasetFormatError,
        json.JSONDecodeError,
        ValueError,
        KeyError,
    ) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
