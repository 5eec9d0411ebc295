"""Acceptance criteria 1 to 8.

Each test prints one ``criterion N: PASS|FAIL`` line with the measured
figures, then asserts the same condition.
"""

import math
import time

import numpy as np
import pytest
from scipy.optimize import minimize

import oracles
from roundtrip import OMEGA, covered, single_ion_data, single_ion_trial, two_ion_trial
from xjunction.dynamics import ramsey_phase_check, second_order_zeeman_shift, two_ion_normal_modes
from xjunction.shuttle import compile_reorder, net_permutation, validate_sequence
from xjunction.table1 import load_table1
from xjunction.thermometry import compare_distributions, initial_guess
from xjunction.thermometry.models import (
    FlopModelParams,
    single_ion_flop,
    three_level_populations,
    two_ion_flop,
    two_mode_flop,
)
from xjunction.units import BE9_MASS, frequency_from_curvature
from xjunction.waveform import (
    FilterModel,
    PotentialConstraints,
    QuarticWell,
    apply_filter,
    axial_minima,
    default_basis,
    precompensate,
    sample_count,
    separation_ramp,
    solve_voltages,
)
from xjunction.waveform.solver import axes_for_angle


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail

    return emit


def test_criterion_1_table_consistency(report):
    start = time.perf_counter()
    table = load_table1()
    lines, ok = [], True
    for n in range(1, 6):
        pred = table.predict(n)
        (meas,) = table.row(n).measured.values()
        good = abs(pred.value - meas.value) <= meas.sigma + 1e-12
        ok &= good
        lines.append(f"row{n} {pred.value:.3f} vs {meas.value:.3f}({meas.sigma:.3f})")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 1.0
    report(1, ok, f"{'; '.join(lines)}; {elapsed * 1e3:.0f} ms")


def test_criterion_2_excitation_inversion(report):
    table = load_table1()
    lines, ok = [], True
    for n in (1, 2, 3, 4, 5, 9, 10):
        got = table.derive(n)
        ref = table.row(n).delta_np
        good = abs(got.value - ref.value) <= max(ref.sigma, 0.002) + 1e-12
        ok &= good
        lines.append(f"row{n} {got.value:.4f} vs {ref.value:.3f}({ref.sigma:.3f})")
    report(2, ok, "; ".join(lines))


def test_criterion_3_reordering_plan(report):
    lib = load_table1().library
    seq = compile_reorder(["a", "b"], lib)
    expected = "S_ab A_aB_b A_aC_b A_aV_b C_aV_b H_aV_b H_aC_b H_aA_b C_aA_b B_aA_b S_ba".split()
    chain = [c.replace(" ", "") for c in seq.chain().split(" -> ")]
    valid = bool(validate_sequence(seq))
    perm = net_permutation(seq)
    swapped = perm["a"].start == perm["b"].end and perm["b"].start == perm["a"].end
    first, last = chain.index("A_aB_b"), chain.index("B_aA_b")
    core_us = sum(s.duration_us for s in seq.steps[first:last])
    longest = max(s.duration_us for s in seq.steps)
    ok = chain == expected and valid and swapped and abs(core_us - 1100) <= longest
    report(3, ok, f"chain ok={chain == expected}, valid={valid}, swapped={swapped}, A_aB_b->B_aA_b {core_us:.0f} us")


def test_criterion_4_normal_modes(report):
    com, stre = two_ion_normal_modes(3.6)
    ratio = stre.frequency_mhz / com.frequency_mhz
    ref, _ = oracles.two_ion_hessian_frequencies(3.6e6, BE9_MASS, BE9_MASS)
    ok = (
        abs(ratio - math.sqrt(3)) < 1e-9
        and abs(stre.frequency_mhz - 6.235) < 5e-4
        and abs(stre.frequency_mhz - 6.2) / 6.2 < 0.01
        and abs(ref[1] / 1e6 - stre.frequency_mhz) / stre.frequency_mhz < 1e-4
    )
    report(4, ok, f"STR/COM-sqrt3 = {ratio - math.sqrt(3):.1e}; STR {stre.frequency_mhz:.4f} MHz")


def test_criterion_5_phase_checks(report):
    shift = second_order_zeeman_shift(4.1e-3 * 15e-6 * 1e6, 0.305)
    r1, _ = ramsey_phase_check(-18.2)
    r2, _ = ramsey_phase_check(-28.7)
    ok = abs(shift - 1e-3) / 1e-3 <= 0.2 and abs(r1 - 0.46) < 0.5 and abs(r2 - 2.29) < 0.5
    report(5, ok, f"Zeeman {shift * 1e3:.3f} mHz; -18.2 -> {r1:.3f}; -28.7 -> {r2:.3f} rad")


def test_criterion_6_oracle_equivalence(report):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = {"single": 0.0, "two_mode": 0.0, "two_ion": 0.0, "ladder": 0.0}
    for _ in range(100):
        n1, n2 = rng.uniform(0, 3, 2)
        e1, e2 = rng.uniform(0.05, 0.45, 2)
        gamma = float(rng.choice([0.0, rng.uniform(0, 5e4)]))
        cut1, cut2 = (int(c) for c in rng.integers(2, 31, 2))
        kappa = int(rng.choice([1, -1]))
        dist = str(rng.choice(["thermal", "coherent"]))
        t = float(rng.uniform(0, 100e-6))
        one = FlopModelParams(OMEGA, gamma, {"z": n1}, {"z": e1}, {"z": cut1}, dist)
        pair = FlopModelParams(OMEGA, gamma, {"COM": n1, "STR": n2}, {"COM": e1, "STR": e2}, {"COM": cut1, "STR": cut2})
        worst["single"] = max(
            worst["single"],
            abs(float(single_ion_flop(one, t, kappa)) - oracles.single_ion_oracle(n1, e1, OMEGA, gamma, t, kappa, cut1, dist)),
        )
        worst["two_mode"] = max(
            worst["two_mode"],
            abs(float(two_mode_flop(pair, t, "COM", kappa))
                - oracles.two_mode_oracle(n1, n2, e1, e2, OMEGA, gamma, t, kappa, cut1, cut2)),
        )
        worst["two_ion"] = max(
            worst["two_ion"],
            abs(float(two_ion_flop(pair, t, "COM", kappa))
                - oracles.two_ion_oracle(n1, n2, e1, e2, OMEGA, gamma, t, kappa, cut1, cut2)),
        )
        g1, g2 = rng.uniform(0, 2 * math.pi * 60e3, 2)
        c0, c1 = three_level_populations(g1, g2, t)
        r0, r1, _ = oracles.ladder_rk(g1, g2, t)
        worst["ladder"] = max(worst["ladder"], abs(float(c0) - r0), abs(float(c1) - r1))
    elapsed = time.perf_counter() - start
    ok = (
        max(worst["single"], worst["two_mode"], worst["two_ion"]) < 1e-9
        and worst["ladder"] < 1e-6
        and elapsed < 30
    )
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report(6, ok, f"max |model - oracle|: {detail}; {elapsed:.1f} s")


TRIALS = 200


@pytest.mark.slow
def test_criterion_7_round_trip(report):
    rates = {}
    for nbar in (0.1, 1.1, 1.7):
        hits = sum(covered(single_ion_trial(nbar, seed), "nbar:z", nbar) for seed in range(TRIALS))
        rates[f"single {nbar}"] = hits / TRIALS
    hits = {"COM": 0, "STR": 0}
    for seed in range(TRIALS):
        res = two_ion_trial(seed)
        hits["COM"] += covered(res, "nbar:COM", 0.55)
        hits["STR"] += covered(res, "nbar:STR", 0.43)
    rates["pair STR 0.43"] = hits["STR"] / TRIALS
    rates["pair COM 0.55"] = hits["COM"] / TRIALS
    data = single_ion_data(1.7, seed=0)
    preferred, fits = compare_distributions(data, initial_guess(data, {"z": 0.35}))
    ok = all(r >= 0.95 for r in rates.values()) and preferred == "thermal"
    detail = ", ".join(f"{k}: {100 * v:.1f}%" for k, v in rates.items())
    chi = f"thermal {fits['thermal'].reduced_chi2:.2f} vs coherent {fits['coherent'].reduced_chi2:.2f}"
    report(7, ok, f"coverage within 3 sigma {detail}; reduced chi2 {chi}")


def _fd_hessian(f, x, z, h=0.05):
    fxx = (f(x + h, z) - 2 * f(x, z) + f(x - h, z)) / h**2
    fzz = (f(x, z + h) - 2 * f(x, z) + f(x, z - h)) / h**2
    fxz = (f(x + h, z + h) - f(x + h, z - h) - f(x - h, z + h) + f(x - h, z - h)) / (4 * h * h)
    return np.array([[fxx, fxz], [fxz, fzz]])


def _remeasure(basis, target):
    sol = solve_voltages(basis, target)
    v = sol.voltages
    x0 = np.asarray(target.position) + 1.0
    found = minimize(lambda p: basis.potential(p, v), x0=x0, method="Nelder-Mead",
                     options={"xatol": 1e-7, "fatol": 1e-16, "maxiter": 4000}).x
    u, _ = axes_for_angle(target.weak_axis_angle)
    h = _fd_hessian(lambda x, z: basis.potential((x, z), v), *found)
    freq = frequency_from_curvature(float(u @ h @ u))
    return math.dist(found, target.position), freq


def test_criterion_8_waveform_solver(report):
    basis = default_basis()
    targets = [
        PotentialConstraints.for_frequency((0.0, -710.0), 3.6e6),
        PotentialConstraints.for_frequency((0.0, 880.0), 2.0e6),
        PotentialConstraints.for_frequency((0.0, -320.0), 2.5e6),
        PotentialConstraints.for_frequency((540.0, 0.0), 2.0e6, weak_axis_angle=math.pi / 2),
    ]
    pos_err, freq_err = 0.0, 0.0
    for tgt in targets:
        d, f = _remeasure(basis, tgt)
        pos_err = max(pos_err, d)
        freq_err = max(freq_err, abs(f - frequency_from_curvature(tgt.curvature)) / frequency_from_curvature(tgt.curvature))
    wf = separation_ramp(basis, QuarticWell.harmonic(2.5e6), QuarticWell.double(170.0, 1.5e6), steps=6)
    minima = axial_minima(basis, wf.samples[-1], (0.0, -710.0))
    gap = minima[-1] - minima[0] if len(minima) == 2 else float("nan")
    filt = FilterModel(1e6)
    pre, clipped = precompensate(wf, filt)
    round_trip = np.abs(apply_filter(pre, filt).samples - wf.samples)[1:].max() / wf.v_max
    n = sample_count(310e-6, 50e6)
    ok = (
        pos_err < 0.1
        and freq_err < 0.005
        and abs(gap - 340) / 340 <= 0.05
        and clipped == 0
        and round_trip < 1e-9
        and n == 15500
        and len(wf) == 15500
    )
    report(
        8,
        ok,
        f"position err {pos_err * 1e3:.2f} nm, frequency err {100 * freq_err:.4f}%, "
        f"minima {gap:.1f} um apart, filter round trip {round_trip:.1e} of full scale, {n} samples",
    )
