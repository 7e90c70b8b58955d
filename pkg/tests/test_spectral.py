import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lightray.geometry import RayChart, Sinogram, SpacetimeGrid
from lightray.phantoms import Gaussian, sample_phantom
from lightray.spectral import (MultiplierSpec, cutoff_Q, fbp_reconstruct, normal_constant,
                               normal_via_multiplier, smooth_cutoff, spherical_means,
                               sphere_integral_lemma_check, stable_inversion, windowed_one)

# Normal operator of the unit Gaussian at the origin: |S^{n-1}| sqrt(pi / 2).
# Frozen from the closed form of the ray integral of a Gaussian.
ORIGIN_VALUE = {2: 7.874804972861209, 3: 15.749609945722417}


def test_normal_constant():
    assert normal_constant(2) == pytest.approx(4 * math.pi)
    assert normal_constant(3) == pytest.approx(4 * math.pi**2)


def test_origin_value_closed_form():
    for n, area in ((2, 2 * math.pi), (3, 4 * math.pi)):
        assert ORIGIN_VALUE[n] == pytest.approx(area * math.sqrt(math.pi / 2), rel=1e-15)


@given(st.floats(0.01, 0.99), st.floats(0, 3))
def test_smooth_cutoff_profile(eps, s):
    v = float(smooth_cutoff(s, eps))
    assert 0.0 <= v <= 1.0
    if s <= 1 - eps:
        assert v == 1.0
    if s >= 1 - eps / 2:
        assert v == 0.0


@given(st.floats(0.05, 0.95))
def test_smooth_cutoff_monotone(eps):
    s = np.linspace(0, 1.2, 2001)
    v = smooth_cutoff(s, eps)
    assert np.all(np.diff(v) <= 1e-15)


def test_smooth_cutoff_rejects_eps():
    for eps in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            smooth_cutoff(0.5, eps)


def test_windowed_one():
    assert windowed_one(0.0) == 1.0 and windowed_one(5.0) == 0.0
    assert 0 < windowed_one(3.5) < 1


def test_normal_multiplier_at_origin_n2():
    g = SpacetimeGrid(2, 5.0, 5.0, 41, 41)
    out = normal_via_multiplier(sample_phantom(Gaussian.centered(2), g))
    assert out.values[20, 20, 20] == pytest.approx(ORIGIN_VALUE[2], abs=1e-10)


def test_normal_multiplier_at_origin_n3():
    g = SpacetimeGrid(3, 4.0, 4.0, 21, 21)
    out = normal_via_multiplier(sample_phantom(Gaussian.centered(3), g))
    assert out.values[10, 10, 10, 10] == pytest.approx(ORIGIN_VALUE[3], abs=1e-6)


@pytest.mark.parametrize("n", [2, 3])
def test_spherical_means_origin(n):
    v = spherical_means(Gaussian.centered(n), 0.0, np.zeros(n), 8.0, n_dirs=32)
    assert v == pytest.approx(ORIGIN_VALUE[n], abs=1e-12)


def test_multiplier_output_is_real():
    g = SpacetimeGrid(2, 4.0, 4.0, 33, 33)
    out = normal_via_multiplier(sample_phantom(Gaussian((0.2, 0.1, -0.3)), g))
    assert np.all(np.isfinite(out.values))


def test_fbp_refuses_n2():
    with pytest.raises(ValueError):
        MultiplierSpec("fbp", 2)
    g = SpacetimeGrid(2, 2.0, 2.0, 9, 9)
    with pytest.raises(ValueError):
        fbp_reconstruct(sample_phantom(Gaussian.centered(2), g))


def test_multiplier_spec_validation():
    with pytest.raises(ValueError):
        MultiplierSpec("laplace")
    with pytest.raises(ValueError):
        MultiplierSpec("normal", 4)


def test_symbols_vanish_outside_spacelike_cone():
    for kind in ("normal", "inversion"):
        sym = MultiplierSpec(kind, 3).symbol(np.array([2.0, 0.5]), np.array([1.0, 1.0]))
        assert sym[0] == 0.0 and sym[1] > 0.0


def test_cutoff_keeps_constant_mode():
    ch = RayChart.circle(2.0, 9, 8)
    s = Sinogram(ch, np.ones(ch.shape))
    q = cutoff_Q(s, 0.3, pad=1)
    assert np.allclose(q.values, 1.0, atol=1e-14)


def test_inversion_warns_when_eps_too_small():
    ch = RayChart.circle(2.0, 9, 8)
    s = Sinogram(ch, np.zeros(ch.shape))
    g = SpacetimeGrid(2, 1.0, 1.0, 5, 5)
    with pytest.warns(UserWarning):
        stable_inversion(s, 0.01, grid=g)


@pytest.mark.parametrize("xi", [(1.3, -0.4), (0.2, 0.9, -1.1)])
def test_sphere_lemma(xi):
    res = sphere_integral_lemma_check(lambda s: np.exp(-s * s) * (1 + s), xi)
    assert res.residual < 1e-10
