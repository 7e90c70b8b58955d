import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lightray.geodesics import (FLRW, CoordinateMetric, Minkowski, ProductStatic, RxS2,
                                canonical_relation_data, conjugate_covectors, detect_conjugate,
                                lightlike_statistic, propagate_jacobi, shoot_null_geodesic)


class _Generic(CoordinateMetric):
    """Wraps a metric so that only g, dg, d2g are used (generic Christoffels)."""

    def __init__(self, m):
        self.m = m
        self.n, self.dim, self.t0 = m.n, m.dim, m.t0

    def g(self, x):
        return self.m.g(x)

    def g_inv(self, x):
        return self.m.g_inv(x)

    def dg(self, x):
        return self.m.dg(x)

    def d2g(self, x):
        return self.m.d2g(x)

    def in_domain(self, x):
        return self.m.in_domain(x)


EDS = FLRW.einstein_de_sitter(2)


@given(st.floats(0.5, 3.0), st.floats(-2, 2), st.floats(-2, 2))
def test_flrw_christoffel_matches_generic(t, x1, x2):
    x = np.array([t, x1, x2])
    assert np.allclose(EDS.christoffel(x), _Generic(EDS).christoffel(x), atol=1e-13)


def test_accel_jacobian_matches_finite_differences():
    rng = np.random.default_rng(0)
    for m in (EDS, FLRW.einstein_de_sitter(3), RxS2()):
        x = np.zeros(m.dim)
        x[0] = 1.3
        if isinstance(m, RxS2):
            x[1:] = [0.6, 0.0, 0.8]
        else:
            x[1:] = rng.normal(size=m.n)
        v = rng.normal(size=m.dim)
        Jx, Jv = m.accel_jac(x, v)
        h = 1e-6
        for k in range(m.dim):
            e = np.zeros(m.dim)
            e[k] = h
            fdx = (m.accel(x + e, v) - m.accel(x - e, v)) / (2 * h)
            fdv = (m.accel(x, v + e) - m.accel(x, v - e)) / (2 * h)
            assert np.allclose(Jx[..., k], fdx, atol=1e-7)
            assert np.allclose(Jv[..., k], fdv, atol=1e-7)


def test_minkowski_geodesic_is_straight():
    rec = shoot_null_geodesic(Minkowski(2), [0.3, -0.2], [0.4], 2.0)
    th = np.array([math.cos(0.4), math.sin(0.4)])
    assert np.allclose(rec.x[:, 1:], np.array([0.3, -0.2]) + rec.s[:, None] * th, atol=1e-13)
    assert np.allclose(rec.x[:, 0], rec.s)
    assert rec.max_null_defect < 1e-14


def test_rxs2_geodesic_is_great_circle():
    rec = shoot_null_geodesic(RxS2(), [0.0, 0.0], [0.0], math.pi)
    y = rec.x[:, 1:]
    assert np.allclose(np.linalg.norm(y, axis=1), 1.0, atol=1e-12)
    # from the south pole along e_1: y = (sin s, 0, -cos s)
    exp = np.stack([np.sin(rec.s), 0 * rec.s, -np.cos(rec.s)], axis=1)
    assert np.allclose(y, exp, atol=1e-10)
    assert rec.max_null_defect < 1e-10


def test_check_signature():
    assert Minkowski(3).check_signature(np.zeros(4))
    assert EDS.check_signature(np.array([1.0, 0.0, 0.0]))
    assert RxS2().check_signature(np.array([0.0, 0.0, 0.0, 1.0]))


def _flat_gp(y):
    return np.broadcast_to(np.eye(2) * (1 + 0.1 * np.sum(y * y, axis=-1))[..., None, None],
                           np.shape(y)[:-1] + (2, 2))


def _flat_dgp(y):
    out = np.zeros(np.shape(y)[:-1] + (2, 2, 2))
    for k in range(2):
        out[..., k, :, :] = np.eye(2) * (0.2 * y[..., k])[..., None, None]
    return out


def _flat_d2gp(y):
    out = np.zeros(np.shape(y)[:-1] + (2, 2, 2, 2))
    for k in range(2):
        out[..., k, k, :, :] = 0.2 * np.eye(2)
    return out


def test_product_static_finite_difference_fallback():
    exact = ProductStatic(_flat_gp, 2, _flat_dgp, _flat_d2gp)
    fd = ProductStatic(_flat_gp, 2)
    x = np.array([0.0, 0.4, -0.7])
    assert np.allclose(exact.christoffel(x), fd.christoffel(x), atol=1e-8)
    r1 = shoot_null_geodesic(exact, [0.1, 0.2], [0.3], 1.0)
    r2 = shoot_null_geodesic(fd, [0.1, 0.2], [0.3], 1.0)
    assert np.allclose(r1.x, r2.x, atol=1e-7)


def test_jacobi_bundle_wronskian_and_conjugate_point():
    rec = shoot_null_geodesic(RxS2(), [0.1, -0.05], [0.3], 1.5 * math.pi)
    b = propagate_jacobi(rec)
    rep = detect_conjugate(b)
    assert len(rep.pairs) >= 1
    assert rep.pairs[0].s2 == pytest.approx(math.pi, abs=1e-8)
    eye = np.eye(b.nfields)
    for i in range(b.nfields):
        for j in range(b.nfields):
            w = b.wronskian(eye[i], eye[j])
            assert np.max(np.abs(w - w[0])) < 1e-8


def test_minkowski_has_no_conjugate_points():
    rec = shoot_null_geodesic(Minkowski(2), [0.0, 0.0], [0.0], 5.0)
    assert detect_conjugate(propagate_jacobi(rec)).pairs == []


def test_relation_covectors_are_lightlike():
    rec = shoot_null_geodesic(RxS2(), [0.0, 0.0], [0.0], 2.0)
    b = propagate_jacobi(rec)
    x, v, _, _ = b.at(0.7)
    rel = canonical_relation_data(b, 0.7, -2.5 * (b.metric.g(x) @ v))
    assert lightlike_statistic(b, rel) < 1e-8
    # a covector off the tangent direction is not lightlike
    other = b.metric.g(x) @ v + np.array([0.0, 0.0, 0.5, 0.0])
    assert lightlike_statistic(b, canonical_relation_data(b, 0.7, other)) > 1e-2


def test_conjugate_covectors_agree_across_pair():
    rec = shoot_null_geodesic(RxS2(), [0.05, 0.0], [1.0], 1.5 * math.pi)
    b = propagate_jacobi(rec)
    pair = detect_conjugate(b).pairs[0]
    r1, r2 = conjugate_covectors(b, pair, 0.7)
    assert np.allclose(r1.zeta, r2.zeta, atol=1e-8)
    assert np.allclose(r1.alpha, r2.alpha, atol=1e-8)


def test_error_cases():
    with pytest.raises(ValueError):
        shoot_null_geodesic(Minkowski(2), [0, 0], [0], -1.0)
    with pytest.raises(ValueError):
        shoot_null_geodesic(Minkowski(2), [0, 0], [0], 1.0, step=0.0)
    with pytest.raises(ValueError):
        RxS2(patch="east")


def test_flrw_future_geodesic_stays_in_domain():
    rec = shoot_null_geodesic(EDS, [0.0, 0.0], [0.0], 5.0, t0=0.2)
    assert not rec.truncated
    back = shoot_null_geodesic(FLRW(lambda t: t ** (2 / 3), lambda t: 2 / 3 * t ** (-1 / 3),
                                    lambda t: -2 / 9 * t ** (-4 / 3), 2, t0=1.0),
                               [0.0, 0.0], [0.0], 1.0)
    assert back.max_null_defect < 1e-10
