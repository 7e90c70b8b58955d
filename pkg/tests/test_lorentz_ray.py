import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import erf

from lightray.checks import gaussian_ray_integral
from lightray.geodesics import Minkowski, RxS2
from lightray.lorentz_ray import (LocalChart, build_cancellation_pair, local_transform,
                                  refocusing_times, singularity_visibility_report)
from lightray.phantoms import Gaussian, RidgeOnSphere, TimeProfile, Zero

RIDGE = RidgeOnSphere(0.0, (0.0, 0.0, 1.0), 0.2)


@pytest.fixture(scope="module")
def small_chart():
    return LocalChart.box(RxS2(), 0.2, 3, 4, 3 * math.pi, 1024)


def test_zero_phantom(small_chart):
    assert np.all(local_transform(Zero(), small_chart).values == 0)


def test_time_profile_gives_one_dimensional_integral(small_chart):
    # t = t0 + s on every record, so the transform is int_0^L phi(t0 + s) ds
    lf = local_transform(TimeProfile(lambda t: np.exp(-t * t)), small_chart)
    a, b = -math.pi, 2 * math.pi
    exact = 0.5 * math.sqrt(math.pi) * (erf(b) - erf(a))
    assert np.allclose(lf.values, exact, atol=1e-10, rtol=0)


def test_ridge_against_great_circle_quadrature():
    m = RxS2()
    rng = np.random.default_rng(4)
    z = rng.uniform(-0.3, 0.3, (6, 2))
    a = rng.uniform(0, 2 * math.pi, (6, 1))
    chart = LocalChart.from_nodes(m, z, a, 3 * math.pi, 2048)
    lf = local_transform(RIDGE, chart).values
    for i in range(6):
        x0, v0 = m.chart_point(z[i], a[i])
        y0, th = x0[1:], v0[1:]

        def integrand(s):
            y = math.cos(s) * y0 + math.sin(s) * th
            return float(RIDGE.evaluate(np.array([x0[0] + s]), y[None, :])[0])

        ref = quad(integrand, 0, 3 * math.pi, points=[math.pi, 2 * math.pi], limit=400,
                   epsabs=1e-13)[0]
        assert lf[i] == pytest.approx(ref, abs=1e-6)


def test_time_translation_equivariance():
    c = 0.37
    m = RxS2()
    z, a = [[0.1, -0.1], [0.0, 0.2]], [[0.5], [2.0]]
    c0 = LocalChart.from_nodes(m, z, a, 3 * math.pi, 1024)
    c1 = LocalChart.from_nodes(m, z, a, 3 * math.pi, 1024, t0=m.t0 + c)
    shifted = RidgeOnSphere(c, RIDGE.center, RIDGE.width)
    v0 = local_transform(RIDGE, c0).values
    v1 = local_transform(shifted, c1).values
    assert np.allclose(v0, v1, atol=1e-12, rtol=0)


def test_minkowski_chart_matches_flat_transform():
    # a record starting at (t0, z) is the line through (0, z - t0 theta)
    t0 = -6.0
    m = Minkowski(2, t0=t0)
    chart = LocalChart.box(m, 0.5, 3, 6, 12.0, 1024)
    lf = local_transform(Gaussian.centered(2), chart)
    th = np.stack([np.cos(chart.a[:, 0]), np.sin(chart.a[:, 0])], axis=1)
    exact = [gaussian_ray_integral((z - t0 * t)[None], t[None])[0, 0] for z, t in zip(chart.z, th)]
    assert np.allclose(lf.values.ravel(), exact, atol=1e-8)


def test_cancellation_pair(small_chart):
    pair = build_cancellation_pair(RIDGE)
    rep = singularity_visibility_report(pair, small_chart)
    assert rep.sup1 > 0.1 * RIDGE.width
    assert rep.ratio < 1e-8
    assert rep.sup2 == pytest.approx(rep.sup1, rel=1e-8)


def test_cancellation_pair_rejects_wide_ridge():
    with pytest.raises(ValueError):
        build_cancellation_pair(RidgeOnSphere(0.0, (0, 0, 1), math.pi / 4))
    with pytest.raises(ValueError):
        build_cancellation_pair(RidgeOnSphere(0.0, (0, 0, 1), 0.1, time_width=1.0))
    assert isinstance(build_cancellation_pair(Zero()).f2, Zero)


def test_refocusing_times(small_chart):
    # start at the south pole region at t = -pi: antipode at t = 0, back at t = pi
    hits = refocusing_times(small_chart, node=small_chart.nodes // 2)
    times = {sgn: [t for t, s in hits if s == sgn] for sgn in (-1, 1)}
    assert times[-1][0] == pytest.approx(0.0, abs=1e-6)
    assert times[1][0] == pytest.approx(math.pi, abs=1e-6)


def test_chart_validation():
    with pytest.raises(ValueError):
        LocalChart.from_nodes(RxS2(), [[0.0, 0.0]], [[0.0]], 1.0, nsteps=7)
    with pytest.raises(ValueError):
        LocalChart.from_nodes(RxS2(), [[0.0, 0.0, 0.0]], [[0.0]], 1.0)
    with pytest.raises(ValueError):
        LocalChart.from_nodes(RxS2(), [[0.0, 0.0]], [[0.0]], 0.0)
