import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mhdecay.evolution import (
    EvolutionError,
    GridSpec,
    InitialData,
    ManufacturedSolution,
    ModeSpec,
    SupportError,
    covariant_residual,
    evolve,
    evolve_mode,
    evolve_traced,
    gauss_residual,
    initialize,
    observed_order,
    rays_from_values,
    step_diamond,
)
from mhdecay.fields import PotentialSpec
from mhdecay.geometry import BackgroundParams

from conftest import BG, PULSE, PULSE_POTENTIAL


def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec(0.0, 10.0, 0.0, 10.0, 0.3)
    with pytest.raises(ValueError):
        GridSpec(5.0, 1.0, 0.0, 10.0, 0.5)


def test_zero_rays():
    grid = GridSpec(0.0, 5.0, 0.0, 5.0, 0.25)
    rays = initialize(grid, InitialData(), BG)
    for arr in (rays.psi_row, rays.psi_col, rays.Q_row, rays.Q_col, rays.A_row, rays.A_col):
        assert np.all(arr == 0)


def test_coulomb_rays():
    grid = GridSpec(0.0, 5.0, 0.0, 5.0, 0.25)
    rays = initialize(grid, InitialData(Q0=1.0), BG)
    assert np.all(rays.Q_row == 1.0) and np.all(rays.Q_col == 1.0)


def test_profile_must_fit_on_ray():
    with pytest.raises(SupportError):
        initialize(GridSpec(0.0, 5.0, 0.0, 5.0, 0.25), InitialData("gaussian", 1.0, 1.0, 2.0), BG)


def test_initial_ray_gauss_constraint():
    """The discrete ray integration satisfies the discrete constraint exactly and
    the continuum constraint at second order."""
    data = InitialData("gaussian", 1e-3, 15.0, 1.5, omega=1.0)
    errors = []
    for d in (0.25, 0.125):
        grid = GridSpec(0.0, 2.0, 0.0, 30.0, d)
        rays = initialize(grid, data, BG)
        v = grid.v
        # d_v Q = -2 omega |psi|^2 for psi = a exp(-z^2) exp(i omega v), A = 0
        a, c, s = data.amplitude, data.center, data.width
        exact = -2.0 * data.omega * a**2 * s * math.sqrt(math.pi / 8.0) * (
            1.0 + np.vectorize(math.erf)(math.sqrt(2.0) * (v - c) / s))
        exact -= exact[0]
        errors.append(np.max(np.abs(rays.Q_row - exact)))
        hist = evolve(grid, data, BG)
        assert gauss_residual(hist)[1][0] <= 1e-18
    assert 3.6 <= errors[0] / errors[1] <= 4.4


@pytest.mark.parametrize("pot", [
    PotentialSpec("Mass", c1=1.0), PotentialSpec("Quartic", c2=2.0), PotentialSpec("SineGordon", c3=1.0),
])
def test_zero_corners_stay_zero(pot):
    zero = (0j, 0.0, 0.0)
    out = step_diamond(zero, zero, zero, BG, pot, 0.1, 4.0, 4.05)
    assert out[0] == 0 and out[1] == 0 and out[2] == 0


def test_flat_transport_is_exact():
    flat = BackgroundParams(0.0)
    grid = GridSpec(-20.0, -10.0, 0.0, 10.0, 0.125)
    g = InitialData("compact-bump", 0.7, 5.0, 2.0).shape(grid.v).real
    rays = rays_from_values(grid, flat, g, np.zeros(grid.nw), np.zeros(grid.nv))
    hist = evolve(grid, InitialData(), flat, rays=rays)
    assert np.max(np.abs(hist.psi - g[None, :])) <= 1e-14
    mh = evolve_mode(ModeSpec(0, 0), grid, InitialData(), flat, rays=(g, np.zeros(grid.nw)))
    assert np.max(np.abs(mh.psi - g[None, :])) <= 1e-14


def test_zero_data_zero_history(zero_history):
    assert np.all(zero_history.psi == 0) and np.all(zero_history.Q == 0) and np.all(zero_history.A_v == 0)
    assert gauss_residual(zero_history)[0] == 0.0
    assert covariant_residual(zero_history)["max"] == 0.0


def test_coulomb_is_static(coulomb_history):
    assert np.all(coulomb_history.phi == 0)
    assert np.all(coulomb_history.Q == 1.0)
    assert gauss_residual(coulomb_history)[0] <= 1e-12


def test_pulse_residuals_second_order(pulse_histories):
    coarse, fine = pulse_histories[0.125], pulse_histories[0.0625]
    g = gauss_residual(coarse)[0] / gauss_residual(fine)[0]
    c = covariant_residual(coarse)["max"] / covariant_residual(fine)["max"]
    assert 3.0 <= g <= 5.0
    assert 3.0 <= c <= 5.0


def test_manufactured_solution_order():
    ms = ManufacturedSolution()
    pot = PotentialSpec("Quartic", c2=0.5)
    errors = []
    for d in (0.2, 0.1, 0.05):
        grid = GridSpec(0.0, 6.4, 0.0, 6.4, d)
        hist = evolve(grid, InitialData(), BG, pot, forcing=ms.forcing(grid, BG, pot), rays=ms.rays(grid))
        errors.append(ms.max_error(hist))
    assert 1.8 <= observed_order(errors) <= 2.2


def test_mode_potential_value():
    assert ModeSpec(1, 1).potential_at(BG, 3.0) == pytest.approx(2.0 / 9.0, rel=1e-15)
    assert ModeSpec(0, 0).potential_at(BG, 4.0) == pytest.approx(2.0 / 64.0, rel=1e-15)


def test_mode_spec_validation():
    with pytest.raises(ValueError):
        ModeSpec(1, 0)
    with pytest.raises(ValueError):
        ModeSpec(1, 1, PotentialSpec("Mass", c1=1.0))


def test_mode_linearity():
    grid = GridSpec(0.0, 20.0, 0.0, 20.0, 0.125)
    d1 = InitialData("compact-bump", 1.0, 6.0, 2.0)
    d2 = InitialData("compact-bump", 1.0, 10.0, 1.0)
    mode = ModeSpec(0, 2)
    a, b = 0.7, -1.3
    row = a * d1.shape(grid.v).real + b * d2.shape(grid.v).real
    both = evolve_mode(mode, grid, InitialData(), BG, rays=(row, np.zeros(grid.nw)))
    one = evolve_mode(mode, grid, d1, BG)
    two = evolve_mode(mode, grid, d2, BG)
    scale = np.max(np.abs(both.psi))
    assert np.max(np.abs(both.psi - (a * one.psi + b * two.psi))) <= 1e-13 * scale


@settings(max_examples=15, deadline=None)
@given(st.floats(12.5, 16.0), st.floats(0.05, 0.5))
def test_domain_of_dependence(center, amplitude):
    grid = GridSpec(0.0, 20.0, 0.0, 20.0, 0.25)
    probe = (32, 48)  # (w, v) = (8, 12)
    base = InitialData("compact-bump", 0.4, 6.0, 2.0, omega=1.0).shape(grid.v)
    bump = InitialData("compact-bump", amplitude, center, 0.5, omega=2.0).shape(grid.v)
    pot = PotentialSpec("Quartic", c2=0.5)
    zero_col = np.zeros(grid.nw, dtype=complex)
    A = np.zeros(grid.nv)
    ref = evolve(grid, InitialData(), BG, pot, rays=rays_from_values(grid, BG, base, zero_col, A))
    new = evolve(grid, InitialData(), BG, pot, rays=rays_from_values(grid, BG, base + bump, zero_col, A))
    assert ref.psi[probe] == new.psi[probe]
    assert ref.Q[probe] == new.Q[probe] and ref.A_v[probe] == new.A_v[probe]


def test_gauge_twin_agrees_to_second_order():
    diffs, q_diffs = [], []
    for d in (0.125, 0.0625):
        grid = GridSpec(0.0, 30.0, 0.0, 30.0, d)
        a = evolve(grid, PULSE, BG, PULSE_POTENTIAL)
        b = evolve(grid, PULSE.gauge_twin(0.3, 0.5), BG, PULSE_POTENTIAL)
        diffs.append(np.max(np.abs(np.abs(a.phi) - np.abs(b.phi))))
        q_diffs.append(np.max(np.abs(a.Q - b.Q)))
    assert 3.0 <= diffs[0] / diffs[1] <= 5.0
    assert 3.0 <= q_diffs[0] / q_diffs[1] <= 5.0


def test_traced_matches_full(pulse_histories):
    hist = pulse_histories[0.125]
    tr = evolve_traced(hist.grid, PULSE, BG, PULSE_POTENTIAL, diagonals=[10, 40])
    for k in (10, 40):
        i = np.arange(hist.grid.nw)
        ok = i + k < hist.grid.nv
        assert np.array_equal(tr.psi[k][ok], hist.psi[i[ok], i[ok] + k])
        assert np.all(np.isnan(tr.psi[k][~ok]))


def test_blow_up_reports_cell():
    with pytest.raises(EvolutionError) as info:
        evolve(GridSpec(0.0, 10.0, 0.0, 10.0, 0.25), InitialData("compact-bump", 1e3, 5.0, 2.0), BG,
               PotentialSpec("Quartic", c2=1.0))
    assert info.value.cell is not None


def test_first_order_hook_degrades_order():
    grid = GridSpec(0.0, 20.0, 0.0, 20.0, 0.25)
    data = InitialData("compact-bump", 1.0, 6.0, 2.0)
    runs = [evolve_mode(ModeSpec(0, 1), GridSpec(0.0, 20.0, 0.0, 20.0, d), data, BG, first_order=True)
            for d in (0.25, 0.125, 0.0625)]
    probe = [mh.psi[int(10 / mh.grid.delta), int(15 / mh.grid.delta)] for mh in runs]
    ratio = abs(probe[0] - probe[1]) / abs(probe[1] - probe[2])
    assert 1.6 <= ratio <= 2.5
    del grid
