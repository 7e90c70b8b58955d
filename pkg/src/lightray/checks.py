"""Acceptance experiments shared by ``lightray selftest`` and the test suite.

Each check returns a ``CheckResult``; nothing here raises on a numerical
failure, so callers decide how to report it.  Grid sizes stay at desk scale
(at most 128 x 128^2 for n = 2 and 64 x 48^3 for n = 3).
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import geodesics as geo
from .geometry import RayChart, ScalarField, Sinogram, SpacetimeGrid
from .lorentz_ray import build_cancellation_pair, default_sphere_chart, singularity_visibility_report
from .minkowski import RaySamplingPlan, forward, fourier_slice_check, pairing_residual
from .phantoms import BandlimitedRandom, Gaussian, PlaneWavePacket, RidgeOnSphere, odd_profile, sample_phantom
from .spectral import (band_stop, cutoff_Q, fbp_reconstruct, normal_via_composition,
                       normal_via_multiplier, relative_difference, sphere_integral_lemma_check,
                       spherical_means, stable_inversion, windowed_one)


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    measured: dict
    limits: dict
    seconds: float = 0.0
    notes: list = field(default_factory=list)

    def line(self) -> str:
        parts = ", ".join(f"{k}={_fmt(v)} (limit {_fmt(self.limits[k])})" if k in self.limits
                          else f"{k}={_fmt(v)}" for k, v in self.measured.items())
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.number:2d} {self.name}: {parts} [{self.seconds:.1f}s]"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.3g}"
    if isinstance(v, tuple) and len(v) == 2:
        return f"[{_fmt(v[0])}, {_fmt(v[1])}]"
    return str(v)


def _timed(fn):
    def run(**kw):
        t = time.perf_counter()
        res = fn(**kw)
        res.seconds = time.perf_counter() - t
        return res
    run.__name__ = fn.__name__
    run.__doc__ = fn.__doc__
    return run


# ---------------------------------------------------------------- minkowski


@_timed
def check_adjoint(seed: int = 0, trials: int = 20, tol: float = 1e-12) -> CheckResult:
    """Pairing residual of the grid forward map and its transpose."""
    rng = np.random.default_rng(seed)
    worst = {2: 0.0, 3: 0.0}
    setups = {2: (SpacetimeGrid(2, 3.0, 3.0, 17, 17), RayChart.circle(3.0, 9, 7)),
              3: (SpacetimeGrid(3, 2.0, 2.0, 9, 9), RayChart.sphere(2.5, 7, 3, 6))}
    for n, (g, ch) in setups.items():
        for i in range(trials):
            interp = "cubic" if i % 2 else "linear"
            f = ScalarField(g, rng.normal(size=g.shape))
            phi = Sinogram(ch, rng.normal(size=ch.shape))
            r = pairing_residual(f, phi, plan=RaySamplingPlan(interpolation=interp))
            worst[n] = max(worst[n], r)
    m = {"n2": worst[2], "n3": worst[3]}
    return CheckResult(1, "adjoint exactness", max(m.values()) <= tol, m, {"n2": tol, "n3": tol})


def gaussian_ray_integral(z, theta):
    """Closed form of the transform of exp(-t^2 - |x|^2)."""
    zt = z @ theta.T
    return math.sqrt(math.pi / 2) * np.exp(zt * zt / 2 - np.sum(z * z, axis=1)[:, None])


@_timed
def check_gaussian_forward(tol: float = 1e-6, min_order: float = 2.0) -> CheckResult:
    """Analytic-mode forward of the unit Gaussian against its closed form."""
    g = SpacetimeGrid(2, 6.0, 6.0, 121, 121)
    ch = RayChart.circle(1.5, 7, 12)
    ph = Gaussian.centered(2)
    exact = gaussian_ray_integral(ch.z_points(), ch.directions)
    steps = [1.2, 0.8, 0.6, 0.4]
    errs = []
    for st in steps:
        s = forward(ph, ch, plan=RaySamplingPlan(step=st, mode="analytic"), grid=g)
        errs.append(float(np.max(np.abs(s.values.reshape(exact.shape) - exact) / exact)))
    orders = [math.log(errs[i] / errs[i + 1]) / math.log(steps[i] / steps[i + 1])
              for i in range(len(steps) - 1)]
    # the midpoint rule is spectrally accurate here; the smallest pairwise
    # order is reported
    m = {"finest_error": errs[-1], "min_order": min(orders)}
    ok = errs[-1] <= tol and min(orders) >= min_order
    return CheckResult(2, "Gaussian forward closed form", ok, m, {"finest_error": tol, "min_order": min_order})


@_timed
def check_kernel(tol: float = 1e-6) -> CheckResult:
    """Odd plane-wave profile h(t + x.a), a = (0.5, 0), lies in the kernel."""
    pw = PlaneWavePacket((0.5, 0.0), odd_profile)
    g = SpacetimeGrid(2, 12.0, 12.0, 97, 97)
    ch = RayChart.circle(1.0, 21, 32)
    s = forward(pw, ch, grid=g)
    v = float(np.max(np.abs(s.values)))
    return CheckResult(3, "kernel plane wave", v <= tol, {"sup": v}, {"sup": tol})


@_timed
def check_fourier_slice(tol_bl: float = 1e-2, tol_gauss: float = 1e-3) -> CheckResult:
    """Ray-side FFT against the spacetime transform on tau = -theta.xi."""
    ph = Gaussian.centered(2)
    gs = SpacetimeGrid(2, 6.0, 6.0, 97, 97)
    cs = RayChart.circle(8.0, 129, 32)
    rg = fourier_slice_check(ph, cs, gs, oracle="analytic").l2_relative
    gb = SpacetimeGrid(2, 10.0, 10.0, 81, 81)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        bl = BandlimitedRandom(2, seed=1)
        rb = fourier_slice_check(bl, RayChart.circle(13.0, 131, 32), gb, oracle="grid").l2_relative
    m = {"gaussian": rg, "bandlimited": rb}
    return CheckResult(4, "Fourier slice", rg <= tol_gauss and rb <= tol_bl, m,
                       {"gaussian": tol_gauss, "bandlimited": tol_bl})


# ----------------------------------------------------------------- spectral


def _normal_case(n: int):
    if n == 2:
        g = SpacetimeGrid(2, 5.0, 5.0, 81, 81)
        ch = RayChart.circle(6.0, 121, 64)
        pts = [(40, 40, 40), (48, 44, 37), (36, 45, 40)]
        oracle_kw = dict(sigma_max=14.0, n_sigma=400, n_dirs=256)
    else:
        g = SpacetimeGrid(3, 4.0, 4.0, 33, 33)
        ch = RayChart.sphere(5.0, 41, 12, 24)
        pts = [(16, 16, 16, 16), (16, 18, 14, 17), (18, 16, 17, 15)]
        oracle_kw = dict(sigma_max=10.0, n_sigma=200, n_dirs=(24, 48))
    return g, ch, pts, oracle_kw


@_timed
def check_normal_operator(tol: float = 2e-2, dims=(2, 3)) -> CheckResult:
    """Adjoint-after-forward against the multiplier, and both against the
    spherical-means formula at a few points."""
    m = {}
    ok = True
    for n in dims:
        g, ch, pts, okw = _normal_case(n)
        ph = Gaussian.centered(n)
        f = sample_phantom(ph, g)
        mult = normal_via_multiplier(f)
        comp = normal_via_composition(ph, ch, grid=g, plan=RaySamplingPlan(step=0.5, mode="analytic"))
        d = relative_difference(band_stop(comp), band_stop(mult))
        scale = float(np.max(np.abs(mult.values)))
        worst = 0.0
        for p in pts:
            t = g.t_axis()[p[0]]
            x = np.array([g.x_axis()[i] for i in p[1:]])
            o = spherical_means(ph, t, x, **okw)
            worst = max(worst, abs(comp.values[p] - o) / scale)
        m[f"n{n}_composition_vs_multiplier"] = d
        m[f"n{n}_pointwise_vs_spherical_means"] = worst
        ok &= d <= tol and worst <= tol
    return CheckResult(5, "normal operator cross-validation", ok, m, {k: tol for k in m})


@_timed
def check_sphere_lemma(seed: int = 0, tol: float = 1e-8) -> CheckResult:
    """Sphere integral of psi(theta.xi) against the one-dimensional formula."""
    rng = np.random.default_rng(seed)
    psis = {"window": lambda s: windowed_one(s, 3.0, 4.0),
            "s": lambda s: np.asarray(s, dtype=float),
            "s^2": lambda s: np.asarray(s, dtype=float) ** 2,
            "gaussian": lambda s: np.exp(-np.asarray(s, dtype=float) ** 2)}
    worst = 0.0
    for n in (2, 3):
        for _ in range(5):
            v = rng.normal(size=n)
            xi = v / np.linalg.norm(v) * rng.uniform(0.5, 3.0)
            for psi in psis.values():
                with warnings.catch_warnings():
                    # odd integrands vanish; quad reports roundoff on them
                    warnings.simplefilter("ignore")
                    worst = max(worst, sphere_integral_lemma_check(psi, xi).residual)
    return CheckResult(6, "sphere integral lemma", worst <= tol, {"max_residual": worst},
                       {"max_residual": tol})


@_timed
def check_fbp(tol_space: float = 5e-2, tol_time: float = 1e-2) -> CheckResult:
    """n = 3 back projection on a spacelike and a timelike band-limited phantom."""
    g = SpacetimeGrid(3, 10.0, 10.0, 41, 41)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fs = sample_phantom(BandlimitedRandom(3, seed=3, width=2.5, spread=0.5), g)
        ft = sample_phantom(BandlimitedRandom(3, seed=4, width=2.5, spread=0.5, timelike=True), g,
                            check_support=False)
    rs = fbp_reconstruct(normal_via_multiplier(fs))
    rt = fbp_reconstruct(normal_via_multiplier(ft))
    m = {"spacelike_error": relative_difference(rs, fs), "timelike_output": rt.norm() / ft.norm()}
    ok = m["spacelike_error"] <= tol_space and m["timelike_output"] <= tol_time
    return CheckResult(7, "FBP self-consistency (n=3)", ok, m,
                       {"spacelike_error": tol_space, "timelike_output": tol_time})


@_timed
def check_stable_inversion(tol: float = 5e-2, tol_stop: float = 1e-10, eps: float = 0.2) -> CheckResult:
    """n = 2 cutoff inversion of a pass-band phantom, and the cutoff acting
    on a plane-wave sinogram in its stop band."""
    g = SpacetimeGrid(2, 10.0, 10.0, 81, 81)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ph = BandlimitedRandom(2, seed=5, width=2.5, spread=0.5)
        f = sample_phantom(ph, g)
    ch = RayChart.circle(13.0, 131, 96)
    s = forward(ph, ch, plan=RaySamplingPlan(step=0.25, mode="analytic"), grid=g)
    _, rep = stable_inversion(s, eps, grid=g, f_true=f)
    # plane waves cos(zeta . z) on an exact FFT bin, placed only on the
    # directions where |theta.zeta| / |zeta| lies in the stop band
    pc = RayChart.circle(5.0, 64, 96)
    period = pc.nz * pc.dz
    zeta = np.array([2 * math.pi * 5 / period, 2 * math.pi * 1 / period])
    ratio = np.abs(pc.directions @ zeta) / np.linalg.norm(zeta)
    stop = ratio >= 1.0 - eps / 2.0
    zp = pc.z_points().reshape(pc.nz, pc.nz, 2)
    wave = np.cos(zp @ zeta)
    vals = np.where(stop[None, None, :], wave[..., None], 0.0)
    q = cutoff_Q(Sinogram(pc, vals), eps, pad=1)
    stop_res = float(np.max(np.abs(q.values))) / float(np.max(np.abs(vals)))
    m = {"reconstruction_error": rep.relative_error, "stopband_residual": stop_res,
         "stopband_directions": int(stop.sum())}
    ok = rep.relative_error <= tol and stop_res <= tol_stop and stop.sum() > 0
    return CheckResult(8, "stable inversion (n=2)", ok, m,
                       {"reconstruction_error": tol, "stopband_residual": tol_stop})


# --------------------------------------------------------------- geodesics


@_timed
def check_geodesic_accuracy(tol_null: float = 1e-9, tol_wr: float = 1e-9, tol_sin: float = 1e-7) -> CheckResult:
    """Null defect and Wronskian drift on three metrics; the R x S^2 Jacobi
    field from a direction change has norm |sin s|."""
    null = 0.0
    wr = 0.0
    cases = [(geo.RxS2(), [0.1, -0.2], [0.7]),
             (geo.FLRW.einstein_de_sitter(2), [0.3, 0.1], [1.1]),
             (geo.FLRW.einstein_de_sitter(3), [0.3, 0.1, -0.2], [0.9, 2.0])]
    sin_err = None
    for metric, z, a in cases:
        rec = geo.shoot_null_geodesic(metric, z, a, 3 * math.pi)
        b = geo.propagate_jacobi(rec)
        null = max(null, rec.max_null_defect)
        nf = b.nfields
        for i in range(nf - 2):
            for j in range(i + 1, nf):
                w = b.wronskian(np.eye(nf)[i], np.eye(nf)[j])
                wr = max(wr, float(np.max(np.abs(w - w[0]))))
        if isinstance(metric, geo.RxS2):
            J = b.values[metric.n]
            sin_err = float(np.max(np.abs(np.linalg.norm(J, axis=1) - np.abs(np.sin(rec.s)))))
    m = {"null_defect": null, "wronskian_drift": wr, "sin_match": sin_err}
    ok = null <= tol_null and wr <= tol_wr and sin_err <= tol_sin
    return CheckResult(9, "geodesic and Jacobi accuracy", ok, m,
                       {"null_defect": tol_null, "wronskian_drift": tol_wr, "sin_match": tol_sin})


@_timed
def check_conjugate(tol: float = 1e-3) -> CheckResult:
    """First conjugate point from s1 = 0 on R x S^2, none on Minkowski or
    Einstein-de Sitter over 3 pi."""
    rec = geo.shoot_null_geodesic(geo.RxS2(), [0.1, -0.2], [0.7], 3 * math.pi)
    rep = geo.detect_conjugate(geo.propagate_jacobi(rec), 0.0)
    first = rep.parameters[0] if rep.parameters else float("nan")
    none = 0
    for metric, z, a in [(geo.Minkowski(2), [0.0, 0.0], [0.3]),
                         (geo.Minkowski(3), [0.0, 0.0, 0.0], [0.4, 1.0]),
                         (geo.FLRW.einstein_de_sitter(2), [0.3, 0.1], [1.1]),
                         (geo.FLRW.einstein_de_sitter(3), [0.3, 0.1, -0.2], [0.9, 2.0])]:
        r = geo.detect_conjugate(geo.propagate_jacobi(geo.shoot_null_geodesic(metric, z, a, 3 * math.pi)), 0.0)
        none += len(r.pairs)
    err = abs(first - math.pi)
    m = {"s2_minus_pi": err, "flat_and_eds_found": none}
    return CheckResult(10, "conjugate points", err <= tol and none == 0, m, {"s2_minus_pi": tol})


def _random_relation_covectors(rng, count: int):
    """Yield (bundle, s, lightlike covector, spacelike covector); all covectors
    annihilate the geodesic's tangent and have unit Euclidean norm."""
    cases = [geo.FLRW.einstein_de_sitter(2), geo.RxS2(), geo.FLRW.einstein_de_sitter(3),
             geo.Minkowski(3)]
    bundles = []
    for metric in cases:
        for _ in range(2):
            z = rng.uniform(-0.4, 0.4, metric.n)
            a = rng.uniform(0.3, 2.8, metric.n - 1)
            bundles.append(geo.propagate_jacobi(geo.shoot_null_geodesic(metric, z, a, 3.0, step=3.0 / 1024)))
    for i in range(count):
        b = bundles[i % len(bundles)]
        m = b.metric
        s = rng.uniform(0.3, 2.9)
        x, v, _, _ = b.at(s)
        G = m.g(x)
        flat = G @ v
        # a unit spacelike vector g-orthogonal to v and to the time axis
        w = np.zeros(m.dim)
        w[1:] = rng.normal(size=m.dim - 1)
        if isinstance(m, geo.RxS2):
            w[1:] -= (w[1:] @ x[1:]) * x[1:]
        w[1:] -= (w[1:] @ (G[1:, 1:] @ v[1:])) / (v[1:] @ G[1:, 1:] @ v[1:]) * v[1:]
        w /= math.sqrt(w @ G @ w)
        lam = rng.choice([-1.0, 1.0]) * rng.uniform(0.2, 5.0)
        light = lam * flat
        space = flat + rng.choice([-1.0, 1.0]) * rng.uniform(0.3, 1.0) * (G @ w)
        yield b, s, light / np.linalg.norm(light), space / np.linalg.norm(space)


@_timed
def check_lightlike(seed: int = 0, count: int = 100, tol: float = 1e-8, sep: float = 1e-2) -> CheckResult:
    """max(|alpha|, |zeta_* x theta| / |zeta|) on unit covectors of the relation."""
    rng = np.random.default_rng(seed)
    lmax = 0.0
    smin = math.inf
    for b, s, light, space in _random_relation_covectors(rng, count):
        lmax = max(lmax, geo.lightlike_statistic(b, geo.canonical_relation_data(b, s, light), False))
        smin = min(smin, geo.lightlike_statistic(b, geo.canonical_relation_data(b, s, space), False))
    m = {"lightlike_max": lmax, "spacelike_min": smin}
    return CheckResult(11, "lightlike characterization", lmax <= tol and smin >= sep, m,
                       {"lightlike_max": tol, "spacelike_min": sep})


@_timed
def check_conjugate_covectors(tol: float = 1e-7) -> CheckResult:
    """Covectors g(J'(s_i) + lam gdot(s_i)) at both ends of a conjugate pair
    give the same (zeta, alpha)."""
    worst = 0.0
    for z, a, s1 in [([0.1, -0.2], [0.7], 0.4), ([0.0, 0.3], [2.0], 0.0), ([-0.3, 0.2], [4.0], 1.1)]:
        b = geo.propagate_jacobi(geo.shoot_null_geodesic(geo.RxS2(), z, a, 3 * math.pi))
        rep = geo.detect_conjugate(b, s1)
        if not rep.pairs:
            return CheckResult(12, "conjugate-pair covector identity", False, {"pairs": 0}, {})
        for lam in (0.0, 0.7, -2.0):
            r1, r2 = geo.conjugate_covectors(b, rep.pairs[0], lam)
            d = np.concatenate([r1.zeta - r2.zeta, r1.alpha - r2.alpha])
            worst = max(worst, float(np.max(np.abs(d))))
    return CheckResult(12, "conjugate-pair covector identity", worst <= tol, {"max_difference": worst},
                       {"max_difference": tol})


# ------------------------------------------------------------------ lorentz


@_timed
def check_cancellation(tol: float = 1e-3, width: float = 0.05, order_target: float = 2.0,
                       order_band: float = 0.5) -> CheckResult:
    """Antipodal pair on R x S^2: ratio at the default step, |L f1| stable
    under refinement, and the observed order of the residual."""
    pair = build_cancellation_pair(RidgeOnSphere(0.0, (0.0, 0.0, 1.0), width))
    steps = [512, 1024, 2048]
    ratios, sups = [], []
    for N in steps:
        r = singularity_visibility_report(pair, default_sphere_chart(nz=5, ndir=8, nsteps=N))
        ratios.append(r.ratio)
        sups.append(r.sup1)
    default = ratios[-1]
    # order from the two coarser levels: the finest one sits at roundoff
    order = math.log(ratios[0] / ratios[1]) / math.log(2.0)
    lower = 0.1 * width
    stable = max(sups) / min(sups) - 1.0
    m = {"ratio_default": default, "observed_order": order, "sup_Lf1": sups[-1],
         "sup_Lf1_variation": stable}
    ok = (default <= tol and abs(order - order_target) <= order_band and sups[-1] >= lower
          and stable <= 1e-3)
    return CheckResult(13, "antipodal cancellation", ok, m,
                       {"ratio_default": tol, "observed_order": (order_target - order_band,
                                                                 order_target + order_band),
                        "sup_Lf1": lower, "sup_Lf1_variation": 1e-3})


def _bump_h(x):
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x[..., 1:] ** 2, axis=-1)
    return np.exp(-r2)[..., None, None] * np.eye(2)


def _bump_dh(x):
    x = np.asarray(x, dtype=float)
    e = np.exp(-np.sum(x[..., 1:] ** 2, axis=-1))
    out = np.zeros(x.shape[:-1] + (3, 2, 2))
    for r in (1, 2):
        out[..., r, :, :] = (-2 * x[..., r] * e)[..., None, None] * np.eye(2)
    return out


def _bump_d2h(x):
    x = np.asarray(x, dtype=float)
    e = np.exp(-np.sum(x[..., 1:] ** 2, axis=-1))
    out = np.zeros(x.shape[:-1] + (3, 3, 2, 2))
    for r in (1, 2):
        for q in (1, 2):
            c = 4 * x[..., r] * x[..., q] * e - (2 * e if r == q else 0.0)
            out[..., r, q, :, :] = c[..., None, None] * np.eye(2)
    return out


def euclidean_background(n: int = 2) -> geo.SemiGeodesic:
    return geo.SemiGeodesic(lambda x: np.broadcast_to(np.eye(n), np.shape(x)[:-1] + (n, n)).copy(), n,
                            lambda x: np.zeros(np.shape(x)[:-1] + (n + 1, n, n)),
                            lambda x: np.zeros(np.shape(x)[:-1] + (n + 1, n + 1, n, n)))


@_timed
def check_travel_time(slope_band: float = 0.25, tol_const: float = 1e-4) -> CheckResult:
    """Arrival-time linearization against half the integral of h(gdot, gdot)."""
    g0 = euclidean_background(2)
    x1, x2 = [-2.0, 0.3], [2.0, 0.5]
    eps = [0.04, 0.02, 0.01, 0.005]
    rep = geo.travel_time_linearization_check(g0, _bump_h, x1, x2, eps, nsteps=256,
                                              dh_fn=_bump_dh, d2h_fn=_bump_d2h)
    one = lambda x: np.broadcast_to(np.eye(2), np.shape(x)[:-1] + (2, 2)).copy()
    zero1 = lambda x: np.zeros(np.shape(x)[:-1] + (3, 2, 2))
    zero2 = lambda x: np.zeros(np.shape(x)[:-1] + (3, 3, 2, 2))
    c = geo.travel_time_linearization_check(g0, one, x1, x2, eps, nsteps=256, dh_fn=zero1, d2h_fn=zero2)
    L = float(np.linalg.norm(np.subtract(x2, x1)))
    exact = L * np.sqrt(1.0 + c.eps)
    # the finest Richardson pair; coarser pairs keep an O(eps^2) remainder
    const_err = max(float(np.max(np.abs(c.arrival - exact))),
                    abs(c.predicted - L / 2.0),
                    abs(float(c.richardson[-1]) - L / 2.0))
    m = {"slope": rep.slope, "constant_oracle": const_err}
    ok = abs(rep.slope - 1.0) <= slope_band and const_err <= tol_const
    return CheckResult(14, "travel-time linearization", ok, m,
                       {"slope": (1.0 - slope_band, 1.0 + slope_band), "constant_oracle": tol_const})


CHECKS: dict[int, Callable[..., CheckResult]] = {
    1: check_adjoint, 2: check_gaussian_forward, 3: check_kernel, 4: check_fourier_slice,
    5: check_normal_operator, 6: check_sphere_lemma, 7: check_fbp, 8: check_stable_inversion,
    9: check_geodesic_accuracy, 10: check_conjugate, 11: check_lightlike,
    12: check_conjugate_covectors, 13: check_cancellation, 14: check_travel_time,
}

SUITES = {
    "minkowski": [1, 2, 3, 4],
    "spectral": [5, 6, 7, 8],
    "geodesics": [9, 10, 11, 12, 14],
    "lorentz": [13],
}
SUITES["all"] = sorted(CHECKS)


def run_suite(name: str, report: Callable[[CheckResult], None] = print):
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    results = []
    for k in SUITES[name]:
        r = CHECKS[k]()
        report(r.line())
        results.append(r)
    return results
