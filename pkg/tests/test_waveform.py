import math

import cvxpy as cp
import numpy as np
import pytest
from scipy.optimize import minimize

import oracles
from xjunction.errors import InfeasibleError, RankDeficientError
from xjunction.units import curvature_from_frequency, frequency_from_curvature
from xjunction.waveform import (
    ElectrodeBasis,
    FilterModel,
    PotentialConstraints,
    QuarticWell,
    RFModel,
    Waveform,
    apply_filter,
    axial_minima,
    default_basis,
    load_waveform,
    moments_at,
    precompensate,
    pseudopotential,
    sample_count,
    save_waveform,
    separation_ramp,
    solve_voltages,
    well_rotation_ramp,
)
from xjunction.waveform.basis import MULTI_INDICES
from xjunction.waveform.filters import filter_samples, inverse_samples
from xjunction.waveform.ramps import separation_constraints
from xjunction.waveform.solver import constraint_system, directional_derivative

S_POS = (0.0, -710.0)


@pytest.fixture(scope="module")
def basis():
    return default_basis()


def _fd_potential_hessian(basis, v, point, h=0.05):
    f = lambda x, z: basis.potential((x, z), v)  # noqa: E731
    x, z = point
    fxx = (f(x + h, z) - 2 * f(x, z) + f(x - h, z)) / h**2
    fzz = (f(x, z + h) - 2 * f(x, z) + f(x, z - h)) / h**2
    fxz = (f(x + h, z + h) - f(x + h, z - h) - f(x - h, z + h) + f(x - h, z - h)) / (4 * h * h)
    return np.array([[fxx, fxz], [fxz, fzz]])


# ---------------------------------------------------------------- basis


def test_derivatives_match_mpmath_finite_differences(basis):
    rng = np.random.default_rng(0)
    d = basis.to_dict()
    for point in [(3.0, -700.0), (-20.0, -150.0), (40.0, 25.0), (500.0, 8.0)]:
        v = rng.uniform(-1, 1, len(basis))
        ana = moments_at(basis, point, v)
        for order in MULTI_INDICES:
            ref = oracles.mp_derivative(d, v, point, order)
            scale = max(abs(ana[o]) for o in MULTI_INDICES if sum(o) == sum(order)) or 1.0
            assert abs(ana[order] - ref) <= 1e-6 * scale, (point, order, ana[order], ref)


def test_zero_voltages_leave_pseudopotential(basis):
    point = (10.0, -90.0)
    mom = moments_at(basis, point, np.zeros(len(basis)))
    assert mom[(0, 0)] == pytest.approx(pseudopotential(point, basis.rf), rel=1e-12)
    assert np.allclose([mom[o] for o in MULTI_INDICES], basis.rf_derivatives(point))


def test_moments_linear_in_voltage(basis):
    rng = np.random.default_rng(1)
    v = rng.uniform(-1, 1, len(basis))
    point = (5.0, -600.0)
    rf = basis.rf_derivatives(point)
    one = np.array([moments_at(basis, point, v)[o] for o in MULTI_INDICES]) - rf
    two = np.array([moments_at(basis, point, 2 * v)[o] for o in MULTI_INDICES]) - rf
    assert two == pytest.approx(2 * one, rel=1e-10, abs=1e-14)


def test_pseudopotential_properties():
    assert pseudopotential((30.0, 40.0), rf_amplitude=0.0) == 0.0
    p1 = pseudopotential((30.0, -90.0), rf_frequency=2 * math.pi * 80e6)
    p2 = pseudopotential((30.0, -90.0), rf_frequency=2 * math.pi * 160e6)
    assert p2 == pytest.approx(p1 / 4, rel=1e-12)
    with pytest.raises(ValueError):
        pseudopotential((0.0, 0.0), rf_frequency=0.0)


def test_bumps_flank_the_junction():
    z = np.arange(-400.0, 0.5, 1.0)
    prof = np.array([pseudopotential((0.0, zz)) for zz in z])
    peaks = [z[k] for k in range(1, len(z) - 1) if prof[k] > prof[k - 1] and prof[k] > prof[k + 1]]
    assert peaks and all(-150 < p < -50 for p in peaks)
    assert all(p >= 0 for p in prof)


def test_basis_json_round_trip(basis):
    back = ElectrodeBasis.from_json(basis.to_json())
    assert back == basis
    v = np.linspace(-1, 1, len(basis))
    assert back.potential((1.0, -300.0), v) == basis.potential((1.0, -300.0), v)


# ---------------------------------------------------------------- solver


def test_well_at_s_remeasured(basis):
    target = 3.6e6
    sol = solve_voltages(basis, PotentialConstraints.for_frequency(S_POS, target))
    v = sol.voltages
    found = minimize(lambda p: basis.potential(p, v), x0=[2.0, -705.0], method="Nelder-Mead",
                     options={"xatol": 1e-7, "fatol": 1e-16, "maxiter": 4000}).x
    assert math.dist(found, S_POS) < 0.1
    evals, evecs = np.linalg.eigh(_fd_potential_hessian(basis, v, tuple(found)))
    axial = evals[int(np.argmax(np.abs(evecs[1])))]
    assert abs(frequency_from_curvature(axial) - target) / target < 0.005


def test_equalities_hold_to_1e8(basis):
    wells = [
        PotentialConstraints.for_frequency(S_POS, 3.6e6, quartic=0.0),
        PotentialConstraints.for_frequency((0.0, 880.0), 2.0e6, transverse_curvature=curvature_from_frequency(6e6)),
    ]
    sol = solve_voltages(basis, wells)
    for well in wells:
        mom = moments_at(basis, well.position, sol.voltages)
        for _, dirs, target in well.rows():
            got = directional_derivative(mom, dirs)
            assert abs(got - target) <= 1e-8 * max(abs(target), curvature_from_frequency(1e6))


def test_mirror_symmetric_solution(basis):
    sol = solve_voltages(basis, PotentialConstraints.for_frequency(S_POS, 3.0e6))
    v = dict(zip(basis.names, sol.voltages))
    for name, val in v.items():
        if name.endswith("w"):
            assert val == pytest.approx(v[name[:-1] + "e"], abs=1e-9 * max(map(abs, v.values())))
    for k in range(1, 4):
        assert v[f"J{k}"] == pytest.approx(v[f"J{8 - k}"], abs=1e-9)


def _qp_oracle(basis, wells, v_max):
    a, b, _ = constraint_system(basis, wells)
    x = cp.Variable(len(basis))
    prob = cp.Problem(cp.Minimize(cp.sum_squares(x)), [a @ x == b, cp.abs(x) <= v_max])
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    return x.value


def test_minimum_norm_against_qp_oracle(basis):
    wells = [PotentialConstraints.for_frequency(S_POS, 3.6e6)]
    free = solve_voltages(basis, wells)
    ref = _qp_oracle(basis, wells, 10.0)
    assert free.at_bounds == ()
    assert np.linalg.norm(free.voltages) <= np.linalg.norm(ref) * (1 + 1e-6)
    assert free.voltages == pytest.approx(ref, abs=1e-5)


@pytest.mark.parametrize("fraction", [0.95, 0.9, 0.85])
def test_active_bounds_against_qp_oracle(basis, fraction):
    wells = [PotentialConstraints.for_frequency(S_POS, 3.6e6)]
    v_max = fraction * np.abs(solve_voltages(basis, wells).voltages).max()
    sol = solve_voltages(basis, wells, v_max=v_max)
    ref = _qp_oracle(basis, wells, v_max)
    assert sol.at_bounds
    assert np.all(np.abs(sol.voltages) <= v_max + 1e-12)
    assert sol.voltages == pytest.approx(ref, abs=1e-5)
    assert np.linalg.norm(sol.voltages) <= np.linalg.norm(ref) * (1 + 1e-6)


@pytest.mark.parametrize("fraction", [0.8, 1e-3])
def test_infeasible_bounds_report_constraint(basis, fraction):
    wells = [PotentialConstraints.for_frequency(S_POS, 3.6e6)]
    v_max = fraction * np.abs(solve_voltages(basis, wells).voltages).max()
    ref = _qp_oracle(basis, wells, v_max)
    assert ref is None
    with pytest.raises(InfeasibleError) as exc:
        solve_voltages(basis, wells, v_max=v_max)
    assert exc.value.constraint


def test_inconsistent_constraints(basis):
    wells = [PotentialConstraints.for_frequency(S_POS, 3.0e6), PotentialConstraints.for_frequency(S_POS, 4.0e6)]
    with pytest.raises(InfeasibleError) as exc:
        solve_voltages(basis, wells)
    assert "duu" in exc.value.constraint


def test_redundant_constraints(basis):
    well = PotentialConstraints.for_frequency(S_POS, 3.0e6)
    with pytest.raises(RankDeficientError) as exc:
        solve_voltages(basis, [well, well])
    assert exc.value.null_dim == 4


def test_confining_well_needs_positive_curvature():
    with pytest.raises(ValueError):
        PotentialConstraints(S_POS, -1e-3)


def test_negative_curvature_with_quartic_splits_well(basis):
    # zero curvature alone has a single flat minimum; a slightly negative one splits it
    well = QuarticWell(alpha=-2e-5, beta=1e-9)
    half = math.sqrt(-well.alpha / (2 * well.beta))
    sol = solve_voltages(basis, separation_constraints(S_POS, well, half))
    minima = axial_minima(basis, sol.voltages, S_POS, span=150)
    assert len(minima) == 2
    assert minima == pytest.approx([-half, half], rel=0.01)


# ---------------------------------------------------------------- ramps


def test_sample_count_exact():
    assert sample_count(310e-6) == 15500
    assert sample_count(57e-6) == 2850
    assert sample_count(1e-9) == 1


@pytest.fixture(scope="module")
def separation(basis):
    start = QuarticWell.harmonic(2.5e6)
    end = QuarticWell.double(170.0, 1.5e6)
    return separation_ramp(basis, start, end, steps=6)


def test_separation_endpoint_minima(basis, separation):
    assert len(separation) == 15500
    minima = axial_minima(basis, separation.samples[-1], S_POS)
    assert len(minima) == 2
    assert abs((minima[1] - minima[0]) - 340.0) / 340.0 < 0.05
    first = axial_minima(basis, separation.samples[0], S_POS)
    assert len(first) == 1 and abs(first[0]) < 0.5


def test_separation_within_bounds(separation):
    assert np.all(np.abs(separation.samples) <= separation.v_max)


def test_single_step_keeps_endpoint(basis):
    start = QuarticWell.harmonic(2.5e6)
    end = QuarticWell.double(170.0, 1.5e6)
    wf = separation_ramp(basis, start, end, steps=1, duration_s=1e-6)
    assert np.all(wf.samples == wf.samples[-1])
    full = separation_ramp(basis, start, end, steps=2, duration_s=1e-6)
    assert wf.samples[-1] == pytest.approx(full.samples[-1], abs=1e-12)


def test_bias_shifts_crystal(basis):
    plain = QuarticWell.harmonic(2.5e6)
    biased = QuarticWell.harmonic(2.5e6, bias=plain.alpha * 2 * -1.0)  # slope moves the minimum +1 um
    wf = separation_ramp(basis, plain, biased, steps=2, duration_s=1e-7)
    (shift,) = axial_minima(basis, wf.samples[-1], S_POS, span=50, step=0.01)
    assert shift == pytest.approx(1.0, rel=0.05)


def test_rotation_tracks_axis(basis):
    wf, report = well_rotation_ramp(basis, 0.0, math.pi / 2, steps=10)
    assert len(wf) == 2850
    angles = np.unwrap(report.axis_angles)
    assert np.all(np.diff(angles) > 0)
    assert angles == pytest.approx(report.angles, abs=1e-6)
    assert report.min_gap_mhz > 0
    assert report.flagged == []
    assert report.rotating_mhz == pytest.approx(np.full(10, 2.0), rel=1e-6)


def test_rotation_with_equal_angles_is_constant(basis):
    wf, report = well_rotation_ramp(basis, 0.3, 0.3, steps=4, duration_s=1e-6)
    assert np.all(wf.samples == wf.samples[0])
    assert np.ptp(report.axis_angles) < 1e-9


def test_rotation_flags_small_gap(basis):
    _, report = well_rotation_ramp(basis, 0.0, 0.5, steps=3, axial_mhz=4.0, transverse_mhz=4.2, duration_s=1e-6)
    assert report.flagged == [0, 1, 2]


# ---------------------------------------------------------------- filter


def test_filter_passes_dc():
    f = FilterModel(1e6)
    x = np.full((500, 2), 0.37)
    assert filter_samples(x, f) == pytest.approx(x, abs=1e-15)
    assert inverse_samples(x, f) == pytest.approx(x, abs=1e-15)


def test_impulse_decays_geometrically():
    f = FilterModel(1e6)
    x = np.zeros(50)
    x[1] = 1.0
    y = filter_samples(x, f)
    assert y[1] == pytest.approx(f.alpha)
    assert y[2:] / y[1:-1] == pytest.approx(np.full(48, 1 - f.alpha), rel=1e-12)


def test_half_power_at_cutoff():
    f = FilterModel(1e6)
    t = np.arange(200_000) / f.update_rate
    x = np.sin(2 * math.pi * f.cutoff * t)
    y = filter_samples(x, f)
    gain = np.sqrt(np.mean(y[100_000:] ** 2) / np.mean(x[100_000:] ** 2))
    assert gain == pytest.approx(1 / math.sqrt(2), rel=0.02)


def test_step_pre_emphasis():
    f = FilterModel(1e6)
    step = np.r_[np.zeros(10), np.ones(40)]
    p = inverse_samples(step, f)
    assert p.max() - 1.0 == pytest.approx(1 / f.alpha - 1, rel=1e-12)
    assert p[11:] == pytest.approx(np.ones(39))


def test_precompensation_round_trip(basis, separation):
    f = FilterModel(1e6)
    wf, clipped = precompensate(separation, f)
    assert clipped == 0
    back = apply_filter(wf, f)
    err = np.abs(back.samples - separation.samples)[1:].max()
    assert err < 1e-9 * separation.v_max


def test_precompensation_clips_with_warning():
    names = ("e0",)
    wf = Waveform(np.r_[np.zeros(5), np.full(5, 0.9)].reshape(-1, 1), names, v_max=1.0)
    with pytest.warns(RuntimeWarning):
        out, clipped = precompensate(wf, FilterModel(1e6))
    assert clipped == 1
    assert np.abs(out.samples).max() == 1.0


def test_filter_validation():
    with pytest.raises(ValueError):
        FilterModel(30e6)
    with pytest.raises(ValueError):
        FilterModel(0.0)
    wf = Waveform(np.zeros((3, 1)), ("e0",), update_rate=10e6)
    with pytest.raises(ValueError):
        apply_filter(wf, FilterModel(1e6))


def test_waveform_bounds_enforced():
    with pytest.raises(ValueError):
        Waveform(np.full((2, 1), 11.0), ("e0",))


def test_waveform_file_round_trip(tmp_path, basis):
    wf, _ = well_rotation_ramp(basis, 0.0, 0.2, steps=2, duration_s=2e-7)
    path, header = save_waveform(wf, tmp_path / "rot.csv", {"filter": FilterModel(1e6).to_dict()})
    back = load_waveform(path)
    assert back.names == wf.names
    assert back.update_rate == 50e6
    assert back.samples == pytest.approx(wf.samples, rel=1e-11, abs=1e-15)
    assert '"filter"' in header.read_text()
