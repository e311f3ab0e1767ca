import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mhdecay.acceptance import coulomb_strip_energy
from mhdecay.diagnostics import (
    MORAWETZ,
    TIME,
    CutoffSpec,
    DiagnosticsError,
    EnergyReport,
    MultiplierSpec,
    Profile,
    StressEnergy,
    bulk_integral,
    check_h_admissible,
    check_r1_window,
    composite_energy,
    current,
    divergence_residual,
    e4_from_e3,
    energy_morawetz,
    jk_factor,
    jk_sign_structure,
    linear_profile,
    mode_energy,
    node_fields,
    radial_cutoff_profile,
    redshift_profile,
    slice_energy,
    slice_times,
    stress_energy,
    stress_energy_tensor,
    tensor_null_components,
    time_derivative_mode_rays,
    zero_profile,
)
from mhdecay.evolution import GridSpec, InitialData, ModeSpec, evolve_mode
from mhdecay.fields import FieldSample, PotentialSpec, potential_value

from conftest import BG

R1 = 2.4
REGION = (6.0, 24.0, 4.0, 24.0)
finite = st.floats(-3, 3, allow_nan=False)
complexes = st.builds(complex, finite, finite)


def _multipliers():
    return {
        "K": MORAWETZ,
        "G": MultiplierSpec("RadialG", radial_cutoff_profile(BG, R1)),
        "H": MultiplierSpec("RedshiftH", redshift_profile(BG, R1, rise_start=-15.0)),
    }


def test_multiplier_components():
    w, v, rs, r = np.array(2.0), np.array(5.0), np.array(1.5), np.array(4.0)
    om = 1 - 2 / r
    assert TIME.components(BG, w, v, rs, r, om) == (1.0, 1.0)
    assert MORAWETZ.components(BG, w, v, rs, r, om) == (-4.0, -25.0)
    f = Profile(lambda x: 3.0 * np.ones_like(x), lambda x: np.zeros_like(x))
    assert MultiplierSpec("RadialG", f).components(BG, w, v, rs, r, om) == (-3.0, 3.0)
    hw, hv = MultiplierSpec("RedshiftH", f).components(BG, w, v, rs, r, om)
    assert hw == pytest.approx(-3.0 / om) and hv == -3.0


def test_profile_required():
    with pytest.raises(ValueError):
        MultiplierSpec("RedshiftH")


def test_smooth_cutoff_shape():
    cut = CutoffSpec()
    x = np.linspace(-3, 3, 6001)
    y = cut(x)
    assert np.all(y[np.abs(x) <= 1.0] == 1.0)
    assert np.all(y[np.abs(x) >= 1.5] == 0.0)
    left = x < 0
    assert np.all(np.diff(y[left]) >= 0) and np.all(np.diff(y[~left]) <= 0)
    area = np.trapezoid(y, x) if hasattr(np, "trapezoid") else np.trapz(y, x)
    assert cut.antiderivative(3.0) == pytest.approx(area, rel=1e-6)


def test_vacuum_stress_is_zero():
    T = stress_energy(FieldSample(), 0.0, BG, 4.0)
    assert (T.T_ww, T.T_vv, T.T_wv, T.angular_trace) == (0.0, 0.0, 0.0, 0.0)
    Jw, Jv = current(T, 1.0, 1.0)
    assert Jw == 0 and Jv == 0


def test_pure_potential_stress():
    spec = PotentialSpec("Mass", c1=0.8)
    phi = 0.3 + 0.4j
    P = potential_value(spec, phi)
    r = 5.0
    T = stress_energy(FieldSample(phi), P, BG, r)
    om = 1 - 2 / r
    assert T.T_ww == 0 and T.T_vv == 0
    assert T.T_wv == pytest.approx(0.5 * om * P)
    assert T.angular_trace == pytest.approx(-2.0 * P)
    full = stress_energy_tensor(FieldSample(phi), P, BG, r)
    assert full[2, 2] == pytest.approx(-r * r * P)


@settings(max_examples=200, deadline=None)
@given(complexes, finite, complexes, complexes, st.floats(0, 2), st.floats(2.1, 50))
def test_dual_stress_evaluators_agree(phi, F, dw, dv, P, r):
    sample = FieldSample(phi, 0.0, 0.0, F, dw, dv)
    T = stress_energy(sample, P, BG, r)
    other = tensor_null_components(stress_energy_tensor(sample, P, BG, r), r)
    for key in ("T_ww", "T_vv", "T_wv", "angular_trace"):
        a, b = getattr(T, key), other[key]
        assert a == pytest.approx(b, abs=1e-10 * max(1.0, abs(a)))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=5, max_size=5), finite, finite, st.floats(-4, 4))
def test_current_is_linear_in_multiplier(tvals, vw, vv, scale):
    T = StressEnergy(*tvals)
    Jw, Jv = current(T, vw, vv)
    Sw, Sv = current(T, scale * vw, scale * vv)
    assert Sw == pytest.approx(scale * Jw, abs=1e-12) and Sv == pytest.approx(scale * Jv, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(finite, complexes, complexes, st.floats(0, 1), st.floats(2.1, 30))
def test_morawetz_density_symmetric_on_diagonal(w, dw, dv, P, r):
    a = stress_energy(FieldSample(0j, 0.0, 0.0, 0.1, dw, dv), P, BG, r)
    b = stress_energy(FieldSample(0j, 0.0, 0.0, 0.1, dv, dw), P, BG, r)
    Vw, Vv = MORAWETZ.components(BG, np.array(w), np.array(w), np.array(0.0), r, 1 - 2 / r)
    assert a.contract(Vw, Vv, 1, 1) == pytest.approx(b.contract(Vw, Vv, 1, 1), rel=1e-12, abs=1e-14)


def test_zero_history_energies(zero_history):
    grid = zero_history.grid
    for V in (TIME, *_multipliers().values()):
        assert slice_energy(zero_history, V, ("t", 5.0)).value == 0.0
        assert bulk_integral(zero_history, V, (2.0, 8.0, 2.0, 8.0)) == 0.0
        assert divergence_residual(zero_history, V, (2.0, 8.0, 2.0, 8.0))["residual"] == 0.0
    del grid


def test_coulomb_energy_closed_form():
    res = coulomb_strip_energy(0.125)
    r_in, r_out = res["r_range"]
    assert r_in == pytest.approx(4.0, rel=1e-12)
    assert res["value"] == pytest.approx(math.pi / 2, rel=5e-3)
    assert res["value"] == pytest.approx(2 * math.pi * (1 / r_in - 1 / r_out), rel=5e-3)


def test_coulomb_time_energy_with_tail(coulomb_history):
    vals = [slice_energy(coulomb_history, TIME, ("t", t), coulomb_tail=True).value for t in (2.0, 8.0, 14.0)]
    assert np.allclose(vals, math.pi, rtol=1e-4)


def test_coulomb_divergence_residual(coulomb_history):
    assert divergence_residual(coulomb_history, TIME, REGION)["residual"] <= 1e-8


def test_slice_domain_clipping(pulse_histories):
    hist = pulse_histories[0.125]
    rep = slice_energy(hist, TIME, ("t", 10.0), (-5.0, 100.0))
    assert rep.clipped and rep.domain[1] < 100.0
    with pytest.raises(DiagnosticsError):
        slice_energy(hist, TIME, ("t", 10.0), (200.0, 300.0))


def test_time_energy_conserved_at_second_order(pulse_histories):
    drifts = []
    for d, hist in sorted(pulse_histories.items(), reverse=True):
        E = [slice_energy(hist, TIME, ("t", t), coulomb_tail=True).value for t in slice_times(hist.grid, 5.5, 15.0, 4)]
        drifts.append((max(E) - min(E)) / E[0])
        assert min(E) > 0
    assert 3.0 <= drifts[0] / drifts[1] <= 5.0


def test_morawetz_energy_nonnegative(pulse_histories):
    hist = pulse_histories[0.0625]
    assert all(energy_morawetz(hist, t) >= 0 for t in slice_times(hist.grid, 5.5, 15.0, 16))


def test_killing_bulk_second_order(pulse_histories):
    b = [abs(bulk_integral(h, TIME, REGION, route="divergence")) for _, h in sorted(pulse_histories.items(), reverse=True)]
    assert 3.0 <= b[0] / b[1] <= 5.0
    assert bulk_integral(pulse_histories[0.125], TIME, REGION) == 0.0


@pytest.mark.parametrize("name", ["K", "G", "H"])
def test_divergence_residual_second_order(pulse_histories, name):
    V = _multipliers()[name]
    res = [divergence_residual(h, V, REGION)["residual"] for _, h in sorted(pulse_histories.items(), reverse=True)]
    assert 3.0 <= res[0] / res[1] <= 5.0


def test_bulk_routes_agree(pulse_histories):
    for V in _multipliers().values():
        a = bulk_integral(pulse_histories[0.0625], V, REGION)
        b = bulk_integral(pulse_histories[0.0625], V, REGION, route="divergence")
        assert a == pytest.approx(b, rel=2e-2)


def test_h_rising_bump_conditions():
    cut = CutoffSpec("smooth", -6.0, 50.0, 2.0)
    h = Profile(cut, cut.slope, "rising")
    rep = check_h_admissible(h, BG, R1, domain=(-10.0, 0.5))
    assert rep["h1"]["holds"] and rep["h2"]["holds"]
    assert set(rep) >= {"h3", "h4", "support"}


def test_h_linear_fails_positivity():
    rep = check_h_admissible(linear_profile(), BG, R1, domain=(-5.0, 0.5))
    assert not rep["h1"]["holds"]


def test_h_zero_holds_with_equality():
    rep = check_h_admissible(zero_profile(), BG, R1)
    for k in ("h1", "h2", "h3", "h4"):
        assert rep[k]["holds"] and rep[k]["worst_margin"] == 0.0
    assert not rep["strict"]


def test_default_h_strict():
    rep = check_h_admissible(redshift_profile(BG, R1), BG, R1)
    assert rep["all_hold"] and rep["strict"]


def test_r1_window():
    check_r1_window(BG, 2.4)
    for r1 in (1.9, 2.5, 2.9):
        with pytest.raises(DiagnosticsError, match="support window"):
            check_r1_window(BG, r1)


def test_jk_factor_variants():
    derived = jk_sign_structure(BG, "derived")
    assert derived["bounded"] and derived["positive_inside"] and derived["negative_outside"]
    lo, hi = derived["interval"]
    assert jk_factor(BG, lo, "derived") == pytest.approx(0.0, abs=1e-9)
    assert jk_factor(BG, hi, "derived") == pytest.approx(0.0, abs=1e-9)
    # far field: (3 mu - 2) r*/r -> -2, so the displayed factor tends to 2
    assert jk_factor(BG, 1e12, "displayed") == pytest.approx(2.0, abs=1e-9)


def test_composites_spherical():
    parts = {"E_t": 1.5, "E_K": 0.25, "E_t_Lt": 0.5, "E_K_Lt": 0.125, "E_sharp": 9.0, "E_sharp_Lt": 7.0,
             "E_F": 0.3}
    assert composite_energy(parts, "E_MH_hat") == pytest.approx(1.5 + 0.25 + 0.5 + 0.125)
    assert composite_energy(parts, "E_MH") == pytest.approx(1.75)
    assert composite_energy(parts, "E2") == pytest.approx(0.3)
    zeros = {k: 0.0 for k in parts}
    for kind in ("E_MH", "E_MH_hat", "E1", "E2", "E3"):
        assert composite_energy(zeros, kind) == 0.0
    with pytest.raises(DiagnosticsError):
        composite_energy({"E_t": 1.0}, "E_MH")


def test_e4_quartic_arithmetic():
    parts = {"E_t": 1.5, "E_K": 0.25, "E_sharp": 0.0}
    e3 = composite_energy(parts, "E3")
    w, v = 3.0, 6.0
    expected = (w / v) ** 2 * e3 + e3**7 + e3**4 + e3**3 + e3
    got = composite_energy(parts, "E4", potential=PotentialSpec("Quartic", c2=1.0), w=w, v=v)
    assert got == pytest.approx(expected, rel=1e-14)
    assert e4_from_e3(e3, w, v, "Quartic") == pytest.approx(expected, rel=1e-14)


def test_commuted_mode_energy_consistency():
    mode = ModeSpec(0, 1)
    data = InitialData("compact-bump", 1.0, 6.0, 2.0)
    diffs = []
    for d in (0.125, 0.0625):
        grid = GridSpec(0.0, 20.0, 0.0, 20.0, d)
        mh = evolve_mode(mode, grid, data, BG)
        rays = time_derivative_mode_rays(data.shape(grid.v).real, grid, BG, mode)
        mt = evolve_mode(mode, grid, InitialData(), BG, rays=rays)
        diffs.append(abs(mode_energy(mh, 12.0, commuted=True) - mode_energy(mt, 12.0)))
    assert 3.0 <= diffs[0] / diffs[1] <= 5.0


def test_mode_energy_angular_weight():
    grid = GridSpec(0.0, 20.0, 0.0, 20.0, 0.125)
    mh = evolve_mode(ModeSpec(0, 2), grid, InitialData("compact-bump", 1.0, 6.0, 2.0), BG)
    assert mode_energy(mh, 12.0, angular_order=2) == pytest.approx(36.0 * mode_energy(mh, 12.0), rel=1e-14)


def test_energy_report_ndjson():
    rep = EnergyReport()
    rep.add("E_t", 1.0, where={"t": 2.0}, domain=(0.0, 3.0))
    rep.add("E_K", 2.0)
    lines = [json.loads(x) for x in rep.to_ndjson().splitlines()]
    assert [x["functional"] for x in lines] == ["E_t", "E_K"]
    assert rep.latest() == {"E_t": 1.0, "E_K": 2.0}
    with pytest.raises(DiagnosticsError):
        rep.add("E_bogus", 0.0)


def test_node_fields_of_gauge_view(pulse_histories):
    hist = pulse_histories[0.125]
    view = hist.gauge_transformed(lambda W, V: 0.2 * W, lambda W, V: 0.2 + 0 * W, lambda W, V: 0 * W)
    a, b = node_fields(hist), node_fields(view)
    assert np.allclose(np.abs(a.phi), np.abs(b.phi), atol=1e-14)
