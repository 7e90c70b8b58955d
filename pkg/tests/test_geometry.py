import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lightray.geodesics import FLRW
from lightray.geometry import (Causal, Covector, RayChart, ScalarField, Sinogram, SpacetimeGrid,
                               Weight, classify, sphere_area)


def test_grid_axes_and_spacing():
    g = SpacetimeGrid(2, 2.0, 3.0, 5, 7)
    assert g.shape == (5, 7, 7)
    assert g.dt == pytest.approx(1.0)
    assert g.dx == pytest.approx(1.0)
    assert g.t_axis()[0] == -2.0 and g.t_axis()[-1] == 2.0
    t, x = g.points()
    assert t.shape == (5, 7, 7) and x.shape == (5, 7, 7, 2)


@pytest.mark.parametrize("kw", [dict(n=4, t_extent=1, x_extent=1, nt=3, nx=3),
                                dict(n=2, t_extent=-1, x_extent=1, nt=3, nx=3),
                                dict(n=2, t_extent=1, x_extent=1, nt=1, nx=3),
                                dict(n=2, t_extent=math.inf, x_extent=1, nt=3, nx=3)])
def test_grid_rejects_bad_input(kw):
    with pytest.raises(ValueError):
        SpacetimeGrid(**kw)


def test_field_rejects_nonfinite_and_is_read_only():
    g = SpacetimeGrid(2, 1.0, 1.0, 3, 3)
    with pytest.raises(ValueError):
        ScalarField(g, np.full(g.shape, np.nan))
    f = ScalarField(g, np.ones(g.shape))
    with pytest.raises(ValueError):
        f.values[0, 0, 0] = 2.0


def test_field_inner_is_riemann_sum():
    g = SpacetimeGrid(2, 1.0, 1.0, 5, 5)
    f = ScalarField(g, np.ones(g.shape))
    assert f.inner(f) == pytest.approx(g.size * g.dt * g.dx**2)


@pytest.mark.parametrize("chart,total", [(RayChart.circle(1.0, 3, 17), 2 * math.pi),
                                         (RayChart.sphere(1.0, 3, 6, 11), 4 * math.pi)])
def test_direction_weights_integrate_constants(chart, total):
    assert chart.weights.sum() == pytest.approx(total, rel=1e-14)
    assert np.allclose(np.linalg.norm(chart.directions, axis=1), 1.0)


def test_sphere_rule_integrates_polynomials():
    ch = RayChart.sphere(1.0, 3, 8, 16)
    # int_{S^2} x^2 = 4 pi / 3, int z^4 = 4 pi / 5
    assert ch.weights @ ch.directions[:, 0] ** 2 == pytest.approx(4 * math.pi / 3, rel=1e-13)
    assert ch.weights @ ch.directions[:, 2] ** 4 == pytest.approx(4 * math.pi / 5, rel=1e-13)


def test_chart_rule_round_trip():
    for ch in (RayChart.circle(2.0, 5, 9), RayChart.sphere(2.0, 5, 3, 6)):
        back = RayChart.from_rule(ch.n, ch.z_extent, ch.nz, ch.rule)
        assert back.same_as(ch)


def test_sinogram_shape_check():
    ch = RayChart.circle(1.0, 3, 4)
    with pytest.raises(ValueError):
        Sinogram(ch, np.zeros(5))


def test_sphere_area_values():
    assert sphere_area(0) == pytest.approx(2.0)
    assert sphere_area(1) == pytest.approx(2 * math.pi)
    assert sphere_area(2) == pytest.approx(4 * math.pi)


@given(st.floats(0.1, 10), st.floats(0, 2 * math.pi))
def test_classify_minkowski_cone(r, ang):
    xi = (r * math.cos(ang), r * math.sin(ang))
    assert classify(Covector(r, xi)) is Causal.LIGHTLIKE
    assert classify(Covector(0.5 * r, xi)) is Causal.SPACELIKE
    assert classify(Covector(2.0 * r, xi)) is Causal.TIMELIKE


def test_classify_with_metric():
    m = FLRW.einstein_de_sitter(2)
    base = (8.0, 0.0, 0.0)
    a = 8.0 ** (2.0 / 3.0)
    # g^{-1} = diag(-1, a^-2, a^-2): (a, 0) lowered covector is lightlike
    assert classify(Covector(1.0, (a, 0.0), base), m) is Causal.LIGHTLIKE
    assert classify(Covector(1.0, (2 * a, 0.0), base), m) is Causal.SPACELIKE
    with pytest.raises(ValueError):
        classify(Covector(1.0, (1.0, 0.0)), m)
    with pytest.raises(ValueError):
        classify(Covector(0.0, (0.0, 0.0)))


def test_unit_weight():
    w = Weight.unit()
    assert w.is_unit and w.nowhere_vanishing
    assert np.all(w(np.zeros(3), np.zeros((3, 2)), np.ones((3, 2))) == 1.0)
