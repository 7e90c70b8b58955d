import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lightray.geometry import SpacetimeGrid
from lightray.phantoms import (AntipodalPartner, BandlimitedRandom, Gaussian, PlaneWavePacket,
                               RidgeOnSphere, Sum, Zero, odd_profile, sample_phantom)


def test_gaussian_fourier_matches_quadrature():
    g = Gaussian((0.3, -0.2, 0.1), (1.0, 0.8, 1.2), 2.0)
    G = SpacetimeGrid(2, 7.0, 7.0, 141, 141)
    f = sample_phantom(g, G).values
    t, x = G.points()
    tau, xi = 0.7, np.array([-0.4, 1.1])
    num = np.sum(np.exp(-1j * (t * tau + x @ xi)) * f) * G.cell_volume
    assert num == pytest.approx(complex(g.fourier(tau, xi)), abs=1e-10)


def test_gaussian_rejects_bad_width():
    with pytest.raises(ValueError):
        Gaussian((0.0, 0.0, 0.0), (0.0,))


def test_plane_wave_kernel_conditions():
    PlaneWavePacket((0.5, 0.0)).check_kernel_conditions()
    with pytest.raises(ValueError):
        PlaneWavePacket((1.2, 0.0)).check_kernel_conditions()
    with pytest.raises(ValueError):
        PlaneWavePacket((0.5, 0.0), lambda u: np.exp(-u * u)).check_kernel_conditions()


@given(st.floats(-5, 5))
def test_odd_profile_is_odd(u):
    assert odd_profile(-u) == pytest.approx(-odd_profile(u), abs=1e-300)


def test_bandlimited_is_deterministic_and_seeded():
    a = BandlimitedRandom(2, seed=7)
    b = BandlimitedRandom(2, seed=7)
    c = BandlimitedRandom(2, seed=8)
    t = np.linspace(-1, 1, 5)
    x = np.stack([t, -t], axis=1)
    assert np.array_equal(a.evaluate(t, x), b.evaluate(t, x))
    assert not np.array_equal(a.evaluate(t, x), c.evaluate(t, x))


def test_bandlimited_packets_inside_cone():
    p = BandlimitedRandom(3, seed=2)
    for w in p.frequencies:
        assert abs(w[0]) <= p.cone_fraction * np.linalg.norm(w[1:]) / 4 + 1e-12
    q = BandlimitedRandom(3, seed=2, timelike=True)
    for w in q.frequencies:
        assert np.all(w[1:] == 0)


def test_ridge_and_antipodal_partner():
    f1 = RidgeOnSphere(0.0, (0, 0, 1), 0.1)
    f2 = AntipodalPartner(f1)
    y = np.array([0.0, 0.0, 1.0])
    assert f1.evaluate(0.0, y) == pytest.approx(1.0)
    assert f2.evaluate(math.pi, -y) == pytest.approx(-1.0)
    assert abs(f2.evaluate(0.0, y)) < 1e-100
    with pytest.raises(ValueError):
        RidgeOnSphere(0.0, (0, 0, 0), 0.1)


def test_sum_and_zero():
    s = Sum((Gaussian.centered(2), Zero()))
    assert s.evaluate(0.0, np.zeros(2)) == pytest.approx(1.0)


def test_support_warning_for_truncated_phantom():
    G = SpacetimeGrid(2, 1.0, 1.0, 5, 5)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        sample_phantom(Gaussian.centered(2), G)
    assert any("boundary" in str(x.message) or "support" in str(x.message) for x in w)
