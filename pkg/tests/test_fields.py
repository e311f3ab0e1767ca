import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mhdecay.fields import (
    FieldSample,
    PotentialSpec,
    covariant_derivative,
    current_density,
    field_strength,
    potential_derivative,
    potential_value,
    toda_flags,
)

finite = st.floats(-10, 10, allow_nan=False)
complexes = st.builds(complex, finite, finite)


@pytest.mark.parametrize("spec, phi, expected", [
    (PotentialSpec("Mass", c1=2.0), 3.0, 18.0),
    (PotentialSpec("SineGordon", c3=1.0, eta=math.pi), 1.0, 2.0),
    (PotentialSpec("Toda", c4=3.0, lam=1.0), 0.0, 3.0),
])
def test_potential_values(spec, phi, expected):
    assert potential_value(spec, phi) == pytest.approx(expected, rel=1e-15)


def test_potential_derivative_values():
    assert potential_derivative(PotentialSpec("Mass", c1=2.0), 1 + 1j) == pytest.approx(2 + 2j)
    assert potential_derivative(PotentialSpec("Quartic", c2=1.0), 1.0) == pytest.approx(2.0)


@pytest.mark.parametrize("spec", [
    PotentialSpec("Mass", c1=1.0),
    PotentialSpec("Quartic", c2=1.0),
    PotentialSpec("SineGordon", c3=1.0, eta=2.0),
    PotentialSpec("Toda", c4=2.0, lam=1.5),
])
def test_potential_derivative_at_origin(spec):
    assert potential_derivative(spec, 0.0) == 0.0


def test_toda_flags_near_origin():
    spec = PotentialSpec("Toda", c4=1.0)
    assert list(toda_flags(spec, np.array([0.0, 1e-13, 1e-3]))) == [True, True, False]
    assert not toda_flags(PotentialSpec("Mass", c1=1.0), 0.0)


@settings(max_examples=100, deadline=None)
@given(complexes.filter(lambda z: abs(z) > 1e-3), st.sampled_from(["Mass", "Quartic", "SineGordon", "Toda"]))
def test_potential_derivative_matches_wirtinger_difference(phi, kind):
    spec = PotentialSpec(kind, c1=0.7, c2=0.3, c3=1.1, eta=0.9, c4=0.5, lam=0.8)
    h = 1e-6
    dx = (potential_value(spec, phi + h) - potential_value(spec, phi - h)) / (2 * h)
    dy = (potential_value(spec, phi + 1j * h) - potential_value(spec, phi - 1j * h)) / (2 * h)
    expected = 0.5 * (dx + 1j * dy)
    assert abs(potential_derivative(spec, phi) - expected) <= 1e-5 * max(1.0, abs(expected))


@pytest.mark.parametrize("kw", [dict(c1=-1.0), dict(c2=-0.1)])
def test_negative_coefficients_rejected(kw):
    with pytest.raises(ValueError):
        PotentialSpec("Mass", **kw)


def test_toda_needs_positive_lambda():
    with pytest.raises(ValueError):
        PotentialSpec("Toda", c4=1.0, lam=0.0)


def test_covariant_derivative_values():
    assert covariant_derivative(0.3 + 0.2j, 0.0, 5 - 1j) == 0.3 + 0.2j
    assert covariant_derivative(0.0, 1.0, 1j) == 1.0
    assert covariant_derivative(1.0, 2.0, 1.0) == 1 - 2j


def test_current_density_values():
    assert current_density(2.0, 0.5) == 0.0
    assert current_density(0.0, 1 + 1j) == 0.0
    phi, omega = 0.6 - 0.8j, 1.7
    assert current_density(phi, 1j * omega * phi) == pytest.approx(2 * omega * abs(phi) ** 2, rel=1e-14)


@settings(max_examples=100, deadline=None)
@given(complexes, complexes)
def test_current_density_is_real(phi, dphi):
    assert np.isrealobj(current_density(np.array([phi]), np.array([dphi])))


def test_field_strength_exact_cases():
    d = 0.1
    w = np.arange(12) * d
    v = np.arange(15) * d
    W, V = np.meshgrid(w, v, indexing="ij")
    const = field_strength(np.full(W.shape, 2.0), np.full(W.shape, -1.0), d)
    assert np.max(np.abs(const)) == 0.0
    linear = field_strength(V, np.zeros_like(V), d)
    assert np.allclose(linear, 1.0, atol=1e-12)


def test_field_strength_gauge_shift_is_second_order():
    def max_change(d):
        w = np.arange(0.0, 4.0 + d / 2, d)
        W, V = np.meshgrid(w, w, indexing="ij")
        A_w, A_v = np.sin(V) * W, np.cos(W + V)
        chi_w = 0.4 * np.cos(0.4 * W + 0.7 * V)
        chi_v = 0.7 * np.cos(0.4 * W + 0.7 * V)
        base = field_strength(A_w, A_v, d)
        moved = field_strength(A_w + 0.3 * chi_w, A_v + 0.3 * chi_v, d)
        return np.max(np.abs(moved - base))

    ratio = max_change(0.1) / max_change(0.05)
    assert 3.0 <= ratio <= 5.0


@settings(max_examples=100, deadline=None)
@given(complexes, finite, finite, finite, complexes, complexes, finite, finite, finite)
def test_gauge_invariants(phi, a_w, a_v, f, dw, dv, chi, chi_w, chi_v):
    spec = PotentialSpec("Quartic", c2=0.5)
    sample = FieldSample(phi, a_w, a_v, f, dw, dv)
    before = sample.invariants(spec)
    after = sample.gauge_transform(chi, chi_w, chi_v).invariants(spec)
    for key, val in before.items():
        assert after[key] == pytest.approx(val, abs=1e-10 * max(1.0, abs(val)))
