"""Fourier multipliers for the normal operator, filtered back projection, the
cutoff on ray data and stable inversion.

Conventions: the transform is  f^(tau, xi) = int exp(-i (t tau + x.xi)) f,
so d/dt corresponds to i tau and the wave operator d_t^2 - Laplacian has
symbol |xi|^2 - tau^2.  Its positive part selects the spacelike cone
{|xi| >= |tau|}.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.fft as sfft
from scipy import integrate

from .geometry import RayChart, ScalarField, Sinogram, SpacetimeGrid, sphere_area
from .minkowski import RaySamplingPlan, adjoint_continuum, adjoint_discrete, forward
from .parallel import get_threads
from .phantoms import Phantom

__all__ = [
    "normal_constant",
    "smooth_cutoff",
    "MultiplierSpec",
    "FrequencyGrid",
    "apply_multiplier",
    "normal_via_multiplier",
    "truncated_normal_symbol",
    "kernel_radius",
    "normal_via_composition",
    "spherical_means",
    "fbp_reconstruct",
    "cutoff_Q",
    "stable_inversion",
    "InversionReport",
    "SphereLemmaResult",
    "sphere_integral_lemma_check",
    "windowed_one",
    "band_stop",
    "relative_difference",
    "imaginary_residue",
]

CONE_BAND = 0.02


def normal_constant(n: int) -> float:
    """2 pi |S^{n-2}|: 4 pi for n = 2 and 4 pi^2 for n = 3."""
    return 2.0 * math.pi * sphere_area(n - 2)


def _bump(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def smooth_cutoff(s, eps: float):
    """C-infinity monotone profile: 1 on [0, 1 - eps], 0 on [1 - eps/2, inf)."""
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    a, b = 1.0 - eps, 1.0 - eps / 2.0
    s = np.abs(np.asarray(s, dtype=float))
    u = (s - a) / (b - a)
    lo, hi = _bump(1.0 - u), _bump(u)
    with np.errstate(invalid="ignore"):
        out = lo / (lo + hi)
    out = np.where(u <= 0, 1.0, out)
    return np.where(u >= 1, 0.0, out)


@dataclass(frozen=True)
class MultiplierSpec:
    """Symbol of one of the implemented Fourier multipliers.

    kind is "normal", "fbp", "cutoff" or "inversion".  ``symbol(tau, r)``
    evaluates it at time frequency tau and spatial frequency magnitude r.
    """

    kind: str
    n: int = 3
    eps: float = 0.2
    band: float = CONE_BAND
    paired_with_cutoff: bool = False

    def __post_init__(self):
        if self.kind not in ("normal", "fbp", "cutoff", "inversion"):
            raise ValueError(f"unknown multiplier {self.kind!r}")
        if self.n not in (2, 3):
            raise ValueError("spatial dimension must be 2 or 3")
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")
        if self.kind == "fbp" and self.n == 2 and not self.paired_with_cutoff:
            raise ValueError("the n = 2 filter is only stable behind the cutoff; "
                             "use stable_inversion")

    def symbol(self, tau, r) -> np.ndarray:
        tau = np.abs(np.asarray(tau, dtype=float))
        r = np.asarray(r, dtype=float)
        tau, r = np.broadcast_arrays(tau, r)
        out = np.zeros(tau.shape)
        nz = r > 0
        ratio = np.zeros(tau.shape)
        ratio[nz] = tau[nz] / r[nz]
        cn = normal_constant(self.n)
        if self.kind == "cutoff":
            out = smooth_cutoff(ratio, self.eps)
            out[~nz] = 1.0
            return out
        space = nz & (ratio <= 1.0)
        if self.kind == "normal":
            if self.n == 3:
                out[space] = cn / r[space]
            else:
                # clamp the inverse square root on the band next to the cone
                rr = np.minimum(ratio[space], 1.0 - self.band)
                out[space] = cn / (r[space] * np.sqrt(1.0 - rr * rr))
            return out
        if self.kind == "fbp":
            q = np.sqrt(np.maximum(1.0 - ratio[space] ** 2, 0.0))
            out[space] = r[space] * q ** (3 - self.n) / cn
            return out
        # inversion: the fbp symbol restricted to where the cutoff is nonzero
        keep = space & (ratio < 1.0 - self.eps / 2.0)
        q = np.sqrt(np.maximum(1.0 - ratio[keep] ** 2, 0.0))
        out[keep] = r[keep] * q ** (3 - self.n) / cn
        return out


@dataclass(frozen=True)
class FrequencyGrid:
    """Zero-padded FFT grid for a SpacetimeGrid (real-to-complex on the last axis)."""

    grid: SpacetimeGrid
    pad: float = 2.0

    def __post_init__(self):
        if self.pad < 1.0:
            raise ValueError("padding factor must be at least 1")

    @property
    def shape(self) -> tuple:
        g = self.grid
        nt = sfft.next_fast_len(int(math.ceil(self.pad * g.nt)), real=True)
        nx = sfft.next_fast_len(int(math.ceil(self.pad * g.nx)), real=True)
        return (nt,) + (nx,) * g.n

    def tau(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.shape[0], self.grid.dt)

    def xi(self, axis: int) -> np.ndarray:
        m = self.shape[axis + 1]
        if axis == self.grid.n - 1:
            return 2.0 * np.pi * np.fft.rfftfreq(m, self.grid.dx)
        return 2.0 * np.pi * np.fft.fftfreq(m, self.grid.dx)

    def broadcast(self):
        """(tau, |xi|) as broadcastable arrays over the half spectrum."""
        d = self.grid.n + 1
        tau = self.tau().reshape((-1,) + (1,) * (d - 1))
        r2 = 0.0
        for j in range(self.grid.n):
            shp = [1] * d
            shp[j + 1] = -1
            r2 = r2 + self.xi(j).reshape(shp) ** 2
        return tau, np.sqrt(r2)


def _symbol_fn(spec):
    return spec.symbol if isinstance(spec, MultiplierSpec) else spec


def apply_multiplier(f: ScalarField, spec, pad: float = 2.0, label: Optional[str] = None) -> ScalarField:
    """F^{-1} m F f on the zero-padded grid, cropped back to f's grid.

    ``spec`` is a MultiplierSpec or any function m(tau, r) that is even in
    tau, so real input gives real output.
    """
    fg = FrequencyGrid(f.grid, pad)
    shape = fg.shape
    axes = tuple(range(f.grid.n + 1))
    F = sfft.rfftn(f.values, s=shape, axes=axes, workers=get_threads())
    tau, r = fg.broadcast()
    sym = _symbol_fn(spec)
    # slabs along tau keep the symbol temporaries small
    step = max(1, (1 << 22) // max(1, r.size))
    for a in range(0, shape[0], step):
        F[a:a + step] *= sym(tau[a:a + step], r)
    out = sfft.irfftn(F, s=shape, axes=axes, workers=get_threads())
    del F
    crop = tuple(slice(0, m) for m in f.grid.shape)
    return f.with_values(np.ascontiguousarray(out[crop]), label or f.label)


def imaginary_residue(f: ScalarField, spec, pad: float = 2.0) -> float:
    """max |Im| / max |Re| of the full complex pipeline (evenness check)."""
    fg = FrequencyGrid(f.grid, pad)
    full = fg.shape[:-1] + (fg.shape[-1],)
    axes = tuple(range(f.grid.n + 1))
    F = sfft.fftn(f.values, s=full, axes=axes)
    g = f.grid
    tau = 2 * np.pi * np.fft.fftfreq(full[0], g.dt)
    w = [2 * np.pi * np.fft.fftfreq(m, g.dx) for m in full[1:]]
    grids = np.meshgrid(tau, *w, indexing="ij", sparse=True)
    r = np.sqrt(sum(a**2 for a in grids[1:]))
    out = sfft.ifftn(F * _symbol_fn(spec)(grids[0], r), axes=axes)
    re = np.max(np.abs(out.real))
    return float(np.max(np.abs(out.imag)) / re) if re > 0 else float(np.max(np.abs(out.imag)))


def truncated_normal_symbol(n: int, radius: float) -> Callable:
    """Fourier transform of the cone kernel (delta(t - |x|) + delta(t + |x|)) / |x|^{n-1}
    cut off at |x| <= radius.

    It equals int_{S^{n-1}} 2 sin(radius w) / w dtheta with w = tau + theta.xi and
    tends to the homogeneous symbol as radius grows.  For n = 3 it is
    (4 pi / |xi|) [Si(radius (tau + |xi|)) - Si(radius (tau - |xi|))]; for n = 2
    the circle integral is done with a periodic rule sized to the oscillation.
    """
    from scipy.special import sici

    D = float(radius)
    if n == 3:
        def sym3(tau, r):
            tau, r = np.broadcast_arrays(np.asarray(tau, float), np.asarray(r, float))
            out = np.empty(tau.shape)
            pos = r > 0
            out[pos] = 4.0 * np.pi / r[pos] * (sici(D * (tau[pos] + r[pos]))[0]
                                               - sici(D * (tau[pos] - r[pos]))[0])
            t0 = tau[~pos]
            out[~pos] = 8.0 * np.pi * D * np.sinc(D * t0 / np.pi)
            return out
        return sym3

    def sym2(tau, r):
        tau, r = np.broadcast_arrays(np.abs(np.asarray(tau, float)), np.asarray(r, float))
        out = np.empty(tau.shape)
        # tabulate on the distinct (|tau|, |xi|) pairs
        key_t, inv_t = np.unique(tau, return_inverse=True)
        key_r, inv_r = np.unique(r, return_inverse=True)
        table = np.empty((key_t.size, key_r.size))
        for j, rho in enumerate(key_r):
            m = int(math.ceil(D * rho)) + 48
            phi = (np.arange(m) + 0.5) * np.pi / m
            w = key_t[:, None] + rho * np.cos(phi)[None, :]
            # 2 int_0^{2 pi} sin(D w)/w = 4 int_0^pi, midpoint in phi
            table[:, j] = 4.0 * np.pi / m * np.sum(D * np.sinc(D * w / np.pi), axis=1)
        out[...] = table[inv_t.reshape(tau.shape), inv_r.reshape(tau.shape)]
        return out
    return sym2


def kernel_radius(grid: SpacetimeGrid) -> float:
    """Largest cone radius |x| = |t| linking two points of the grid box."""
    return min(2.0 * grid.t_extent, 2.0 * grid.x_extent * math.sqrt(grid.n))


def normal_via_multiplier(f: ScalarField, pad: float = 2.0, band: float = CONE_BAND,
                          truncate: bool = True) -> ScalarField:
    """Normal operator as a Fourier multiplier.

    The homogeneous symbol C_n (|xi|^2 - tau^2)_+^{(n-3)/2} / |xi|^{n-2} belongs
    to a kernel that is not integrable at infinity, so a periodic FFT
    convolution of it carries an error that only decays like 1/padding.  With
    ``truncate=True`` (default) the kernel is cut at the largest cone radius
    that connects two points of the box, which leaves the result inside the
    box unchanged, and its exact (smooth) symbol is used; the padding is raised
    if needed so that periodic images cannot reach the box.  With
    ``truncate=False`` the homogeneous symbol is used, clamped on the band
    next to the cone for n = 2.
    """
    g = f.grid
    if not truncate:
        return apply_multiplier(f, MultiplierSpec("normal", g.n, band=band), pad,
                                f"N[{f.label}]")
    D = kernel_radius(g)
    need = max(1.0 + D / (2.0 * g.t_extent), 1.0 + D / (2.0 * g.x_extent)) + 1e-9
    return apply_multiplier(f, truncated_normal_symbol(g.n, D), max(pad, need),
                            f"N[{f.label}]")


def normal_via_composition(f, chart: RayChart, plan: Optional[RaySamplingPlan] = None,
                           adjoint: str = "continuum", grid: Optional[SpacetimeGrid] = None,
                           out_grid: Optional[SpacetimeGrid] = None) -> ScalarField:
    """Back projection of the forward transform.

    ``f`` may be a field or a phantom (then ``grid`` is the support box).
    ``adjoint`` is "continuum" or "discrete"; the discrete transpose needs a
    field and returns on the same grid.
    """
    if isinstance(f, ScalarField):
        grid = f.grid
    s = forward(f, chart, None, plan, grid)
    if adjoint == "discrete":
        return adjoint_discrete(s, grid, None, plan)
    return adjoint_continuum(s, out_grid or grid)


def spherical_means(p: Phantom, t: float, x, sigma_max: float, n_sigma: int = 256,
                    n_dirs=256) -> float:
    """Direct quadrature of
    int_{S^{n-1}} int_0^inf [f(t - s, x + s theta) + f(t + s, x + s theta)] ds dtheta,
    which equals the back projection of the forward transform at (t, x)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n == 2:
        chart = RayChart.circle(1.0, 2, int(n_dirs))
    else:
        k = n_dirs if np.ndim(n_dirs) else (int(n_dirs), 2 * int(n_dirs))
        chart = RayChart.sphere(1.0, 2, k[0], k[1])
    # split [0, sigma_max] in panels for a robust Gauss rule
    npan = max(1, int(math.ceil(sigma_max / 1.0)))
    u, wu = np.polynomial.legendre.leggauss(max(4, n_sigma // npan))
    edges = np.linspace(0.0, sigma_max, npan + 1)
    sig = np.concatenate([0.5 * (b - a) * u + 0.5 * (a + b) for a, b in zip(edges[:-1], edges[1:])])
    wsig = np.concatenate([0.5 * (b - a) * wu for a, b in zip(edges[:-1], edges[1:])])
    total = 0.0
    for th, w in zip(chart.directions, chart.weights):
        pts = x[None, :] + sig[:, None] * th[None, :]
        v = p.evaluate(t - sig, pts) + p.evaluate(t + sig, pts)
        total += w * float(np.dot(wsig, v))
    return total


def fbp_reconstruct(nf: ScalarField, n: Optional[int] = None, pad: float = 2.0) -> ScalarField:
    """Filtered back projection for n = 3: (4 pi^2)^{-1} |D_x| applied to the
    normal operator output, restricted to the spacelike cone."""
    n = nf.grid.n if n is None else n
    if n != nf.grid.n:
        raise ValueError("dimension does not match the field")
    if n == 2:
        raise ValueError("n = 2 filtered back projection is singular at the cone; "
                         "use stable_inversion with a cutoff")
    return apply_multiplier(nf, MultiplierSpec("fbp", 3), pad, f"fbp[{nf.label}]")


def cutoff_Q(s: Sinogram, eps: float, pad: float = 2.0) -> Sinogram:
    """Apply phi(|theta.zeta| / |zeta|) in the z variable for each direction.

    The zeta = 0 mode is passed through.  ``pad`` zero-pads the z-grid before
    the FFT; pad = 1 treats the z-grid as one period.
    """
    chart = s.chart
    n = chart.n
    m = sfft.next_fast_len(int(math.ceil(pad * chart.nz))) if pad > 1 else chart.nz
    shape = (m,) * n
    axes = tuple(range(n))
    w = 2.0 * np.pi * np.fft.fftfreq(m, chart.dz)
    W = np.meshgrid(*([w] * n), indexing="ij", sparse=True)
    r = np.sqrt(sum(a**2 for a in W))
    out = np.empty(chart.shape)
    crop = tuple(slice(0, chart.nz) for _ in range(n))
    for k in range(chart.ndir):
        th = chart.directions[k]
        proj = np.abs(sum(th[j] * W[j] for j in range(n)))
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(r > 0, proj / np.where(r > 0, r, 1.0), 0.0)
        mult = smooth_cutoff(ratio, eps)
        F = sfft.fftn(s.values[..., k], s=shape, axes=axes, workers=get_threads())
        v = sfft.ifftn(F * mult, axes=axes, workers=get_threads()).real
        out[..., k] = v[crop]
    return s.with_values(out, f"Q[{s.label}]")


@dataclass(frozen=True)
class InversionReport:
    eps: float
    relative_error: float
    filtered_relative_error: float


def stable_inversion(s: Sinogram, eps: float, grid: Optional[SpacetimeGrid] = None,
                     f_true: Optional[ScalarField] = None, n: Optional[int] = None,
                     pad: float = 2.0, band: float = CONE_BAND):
    """Reconstruct phi(|D_t| / |D_x|) f from s = L f.

    Steps: cutoff in z, continuum back projection onto ``grid`` and the
    multiplier C_n^{-1} |xi| (1 - tau^2/|xi|^2)_+^{(3-n)/2} on the set where
    the cutoff is nonzero.  If the cutoff's transition reaches the clamped
    band next to the cone, eps is enlarged and a warning is issued.

    Returns the reconstruction, or (reconstruction, InversionReport) when
    ``f_true`` is given.
    """
    grid = grid or (f_true.grid if f_true is not None else None)
    if grid is None:
        raise ValueError("need an output grid")
    n = s.chart.n if n is None else n
    if n != s.chart.n or n != grid.n:
        raise ValueError("dimension mismatch")
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    if 1.0 - eps / 2.0 > 1.0 - band:
        new = 2.0 * band
        warnings.warn(f"eps = {eps} lets the cutoff reach the cone band; using eps = {new}",
                      stacklevel=2)
        eps = new
    q = cutoff_Q(s, eps, pad)
    back = adjoint_continuum(q, grid)
    rec = apply_multiplier(back, MultiplierSpec("inversion", n, eps=eps), pad,
                           f"inv[{s.label}]")
    if f_true is None:
        return rec
    filt = apply_multiplier(f_true, MultiplierSpec("cutoff", n, eps=eps), pad)
    rep = InversionReport(eps, relative_difference(rec, f_true), relative_difference(rec, filt))
    return rec, rep


def relative_difference(a: ScalarField, b: ScalarField) -> float:
    nb = b.norm()
    d = float(np.linalg.norm(a.values - b.values)) * math.sqrt(a.grid.cell_volume)
    return d / nb if nb > 0 else d


def band_stop(f: ScalarField, band: float = CONE_BAND, pad: float = 2.0) -> ScalarField:
    """Remove the Fourier content with (1 - band)|xi| <= |tau| <= |xi|."""
    def m(tau, r):
        tau = np.abs(tau)
        inband = (tau >= (1.0 - band) * r) & (tau <= r)
        return np.where(inband, 0.0, 1.0)
    return apply_multiplier(f, m, pad, f.label)


@dataclass(frozen=True)
class SphereLemmaResult:
    lhs: float
    rhs: float

    @property
    def residual(self) -> float:
        return abs(self.lhs - self.rhs)


def windowed_one(s, inner: float = 3.0, outer: float = 4.0):
    """Smooth even bump: 1 on [-inner, inner], 0 outside [-outer, outer]."""
    s = np.abs(np.asarray(s, dtype=float))
    u = (s - inner) / (outer - inner)
    lo, hi = _bump(1.0 - u), _bump(u)
    with np.errstate(invalid="ignore"):
        out = lo / (lo + hi)
    out = np.where(u <= 0, 1.0, out)
    return np.where(u >= 1, 0.0, out)


def sphere_integral_lemma_check(psi: Callable, xi, ndir: int = 512, npolar: int = 64,
                                nazimuth: int = 128) -> SphereLemmaResult:
    """Both sides of
    int_{S^{n-1}} psi(theta.xi) dtheta = |S^{n-2}| |xi|^{2-n} int psi(s) (|xi|^2 - s^2)_+^{(n-3)/2} ds.
    The left side uses the sphere rules of RayChart, the right side adaptive
    quadrature (with the algebraic endpoint weight for n = 2)."""
    xi = np.asarray(xi, dtype=float)
    n = xi.size
    r = float(np.linalg.norm(xi))
    if r == 0.0:
        raise ValueError("xi must be nonzero")
    if n == 2:
        chart = RayChart.circle(1.0, 2, ndir)
    elif n == 3:
        chart = RayChart.sphere(1.0, 2, npolar, nazimuth)
    else:
        raise ValueError("spatial dimension must be 2 or 3")
    lhs = float(np.dot(chart.weights, psi(chart.directions @ xi)))
    f1 = lambda s: float(psi(np.array(s)))
    if n == 2:
        val, _ = integrate.quad(f1, -r, r, weight="alg", wvar=(-0.5, -0.5),
                                epsabs=1e-14, epsrel=1e-13, limit=400)
    else:
        val, _ = integrate.quad(f1, -r, r, epsabs=1e-14, epsrel=1e-13, limit=400)
    rhs = sphere_area(n - 2) * r ** (2 - n) * val
    return SphereLemmaResult(lhs, rhs)
