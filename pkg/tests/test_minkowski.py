import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lightray.checks import gaussian_ray_integral
from lightray.geometry import RayChart, ScalarField, Sinogram, SpacetimeGrid, Weight
from lightray.minkowski import (RaySamplingPlan, adjoint_continuum, adjoint_discrete, forward,
                                fourier_slice_check, pairing_residual, slice_direction)
from lightray.phantoms import Gaussian, Zero, sample_phantom

G2 = SpacetimeGrid(2, 3.0, 3.0, 13, 13)
C2 = RayChart.circle(3.0, 7, 5)


def test_zero_field_gives_zero_sinogram():
    s = forward(ScalarField(G2, np.zeros(G2.shape)), C2)
    assert np.all(s.values == 0)
    s = forward(Zero(), C2, grid=G2)
    assert np.all(s.values == 0)


@given(st.integers(0, 2**31 - 1), st.sampled_from(["linear", "cubic"]))
def test_adjoint_is_transpose(seed, interp):
    rng = np.random.default_rng(seed)
    f = ScalarField(G2, rng.normal(size=G2.shape))
    phi = Sinogram(C2, rng.normal(size=C2.shape))
    assert pairing_residual(f, phi, plan=RaySamplingPlan(interpolation=interp)) <= 1e-12


def test_adjoint_with_weight_is_transpose():
    rng = np.random.default_rng(3)
    kap = Weight(lambda t, x, th: 1.0 + 0.3 * np.cos(t) + 0.1 * x[:, 0] * th[:, 1])
    f = ScalarField(G2, rng.normal(size=G2.shape))
    phi = Sinogram(C2, rng.normal(size=C2.shape))
    assert pairing_residual(f, phi, kappa=kap) <= 1e-12


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_forward_is_linear(a, b):
    rng = np.random.default_rng(0)
    f = rng.normal(size=G2.shape)
    g = rng.normal(size=G2.shape)
    lhs = forward(ScalarField(G2, a * f + b * g), C2).values
    rhs = a * forward(ScalarField(G2, f), C2).values + b * forward(ScalarField(G2, g), C2).values
    assert np.allclose(lhs, rhs, atol=1e-11)


def test_adjoint_deterministic_across_threads():
    from lightray.parallel import set_threads
    rng = np.random.default_rng(1)
    phi = Sinogram(C2, rng.normal(size=C2.shape))
    set_threads(1)
    a = adjoint_discrete(phi, G2).values.copy()
    set_threads(3)
    try:
        b = adjoint_discrete(phi, G2).values.copy()
    finally:
        set_threads(None)
    assert np.array_equal(a, b)


def test_gaussian_forward_closed_form_analytic_mode():
    g = SpacetimeGrid(2, 6.0, 6.0, 25, 25)
    ch = RayChart.circle(1.5, 5, 8)
    s = forward(Gaussian.centered(2), ch, plan=RaySamplingPlan(step=0.25, mode="analytic"), grid=g)
    exact = gaussian_ray_integral(ch.z_points(), ch.directions)
    assert np.max(np.abs(s.values.reshape(exact.shape) / exact - 1)) < 1e-12


def test_gaussian_forward_grid_mode_second_order():
    ch = RayChart.circle(1.0, 3, 6)
    exact = gaussian_ray_integral(ch.z_points(), ch.directions)
    errs = []
    for nx in (49, 97):
        g = SpacetimeGrid(2, 6.0, 6.0, nx, nx)
        s = forward(sample_phantom(Gaussian.centered(2), g), ch)
        errs.append(np.max(np.abs(s.values.reshape(exact.shape) - exact)))
    assert math.log2(errs[0] / errs[1]) > 1.8


def test_time_translation_equivariance():
    # shifting f by c in t shifts the offset z by -c theta; use a ray that
    # stays on the chart grid: theta = e1, c = dz
    g = SpacetimeGrid(2, 6.0, 6.0, 25, 25)
    ch = RayChart.circle(2.0, 9, 4)
    c = ch.dz
    plan = RaySamplingPlan(step=0.2, mode="analytic")
    s0 = forward(Gaussian.centered(2), ch, plan=plan, grid=g).values
    s1 = forward(Gaussian((c, 0.0, 0.0)), ch, plan=plan, grid=g).values
    # theta_0 = (1, 0): Lf_c(z, theta) = Lf(z + c theta, theta)
    assert np.allclose(s1[:-1, :, 0], s0[1:, :, 0], atol=1e-12)


def test_adjoint_continuum_reports_coverage():
    phi = Sinogram(C2, np.ones(C2.shape))
    f, cov = adjoint_continuum(phi, SpacetimeGrid(2, 3.0, 3.0, 7, 7), return_coverage=True)
    assert 0.0 < cov.fraction_outside < 1.0
    assert np.all(f.values >= 0)


def test_adjoint_continuum_of_constant_on_covered_region():
    ch = RayChart.circle(20.0, 81, 16)
    g = SpacetimeGrid(2, 2.0, 2.0, 5, 5)
    f = adjoint_continuum(Sinogram(ch, np.ones(ch.shape)), g)
    assert np.allclose(f.values, 2 * math.pi)


@given(st.floats(-2, 2), st.floats(0.1, 3), st.floats(0, 2 * math.pi))
def test_slice_direction(tau, r, ang):
    xi = np.array([r * math.cos(ang), r * math.sin(ang)])
    th = slice_direction(tau, xi)
    if abs(tau) > np.linalg.norm(xi):
        assert th is None
    else:
        assert th @ xi == pytest.approx(-tau, abs=1e-12)
        assert np.linalg.norm(th) == pytest.approx(1.0)


def test_fourier_slice_gaussian_analytic():
    g = SpacetimeGrid(2, 6.0, 6.0, 49, 49)
    ch = RayChart.circle(8.0, 97, 6)
    rep = fourier_slice_check(Gaussian.centered(2), ch, g, oracle="analytic")
    assert rep.l2_relative < 1e-10


def test_plan_validation():
    with pytest.raises(ValueError):
        RaySamplingPlan(step=0)
    with pytest.raises(ValueError):
        RaySamplingPlan(interpolation="quintic")
    with pytest.raises(ValueError):
        forward(Gaussian.centered(2), C2)
