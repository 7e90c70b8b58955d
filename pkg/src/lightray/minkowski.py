"""Light ray transform on flat spacetime R^{1+n}.

A ray is parameterized as (s, z + s theta) with z in R^n and theta a unit
vector.  The forward map integrates kappa(t, x, theta) f(t, x) along each ray
of a ``RayChart``.  ``adjoint_discrete`` is the literal transpose of the
grid-interpolated forward map; ``adjoint_continuum`` evaluates the back
projection formula by interpolating the sinogram in z.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import _kernels
from .geometry import RayChart, ScalarField, Sinogram, SpacetimeGrid, Weight, resolve_weight
from .parallel import get_threads
from .phantoms import Phantom

__all__ = [
    "RaySamplingPlan",
    "forward",
    "adjoint_discrete",
    "adjoint_continuum",
    "CoverageReport",
    "SliceReport",
    "fourier_slice_check",
    "slice_direction",
    "pairing_residual",
]

# fixed number of partial grids in the adjoint, independent of the thread count
ADJOINT_BLOCKS = 4
# samples evaluated per chunk in analytic mode
_CHUNK = 1 << 21


@dataclass(frozen=True)
class RaySamplingPlan:
    """Quadrature along rays.

    step
        Midpoint step in the ray parameter; ``None`` means min(dt, dx) / 2.
    interpolation
        "linear" or "cubic" (grid mode only).
    mode
        "grid" integrates the trilinear/cubic interpolant of a sampled field,
        "analytic" evaluates a phantom directly at the quadrature nodes.
    speed
        Rays are traversed as (a sigma, z + a sigma theta); the quadrature
        measure is d sigma and ``step`` is measured in sigma.
    """

    step: Optional[float] = None
    interpolation: str = "linear"
    mode: str = "grid"
    speed: float = 1.0

    def __post_init__(self):
        if self.step is not None and not self.step > 0:
            raise ValueError("quadrature step must be positive")
        if self.interpolation not in ("linear", "cubic"):
            raise ValueError(f"unknown interpolation {self.interpolation!r}")
        if self.mode not in ("grid", "analytic"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not self.speed > 0:
            raise ValueError("speed must be positive")

    def resolve_step(self, grid: SpacetimeGrid) -> float:
        return self.step if self.step is not None else min(grid.dt, grid.dx) / 2.0


def _clip(z: np.ndarray, theta: np.ndarray, grid: SpacetimeGrid):
    """Parameter interval where (s, z + s theta) lies in the grid box."""
    T, R = grid.t_extent, grid.x_extent
    lo = np.full(z.shape[0], -T)
    hi = np.full(z.shape[0], T)
    for i in range(z.shape[1]):
        th = theta[i]
        if th == 0.0:
            out = np.abs(z[:, i]) > R
            hi[out] = -np.inf
            continue
        a = (-R - z[:, i]) / th
        b = (R - z[:, i]) / th
        lo = np.maximum(lo, np.minimum(a, b))
        hi = np.minimum(hi, np.maximum(a, b))
    return lo, hi


def _ray_nodes(z, theta, grid, plan: RaySamplingPlan):
    """Start, step (both in s) and node count of the midpoint rule per ray."""
    lo, hi = _clip(z, theta, grid)
    length = np.maximum(hi - lo, 0.0)
    hstep = plan.resolve_step(grid) * plan.speed
    nst = np.ceil(length / hstep - 1e-9).astype(np.int64)
    nst[length <= 0] = 0
    nst = np.maximum(nst, (length > 0).astype(np.int64))
    hs = np.where(nst > 0, length / np.maximum(nst, 1), 0.0)
    lo = np.where(nst > 0, lo, 0.0)
    return lo, hs, nst


def _samples(z, theta, lo, hs, nst):
    """Flattened quadrature nodes: owner ray, t, x."""
    owner = np.repeat(np.arange(z.shape[0]), nst)
    start = np.concatenate([[0], np.cumsum(nst)[:-1]])
    k = np.arange(owner.size) - start[owner]
    s = lo[owner] + (k + 0.5) * hs[owner]
    x = z[owner] + s[:, None] * theta[None, :]
    return owner, s, x


def _ray_chunks(nst):
    """Split rays into consecutive groups with at most _CHUNK samples."""
    csum = np.cumsum(nst)
    out = []
    a = 0
    while a < nst.size:
        base = csum[a - 1] if a > 0 else 0
        b = int(np.searchsorted(csum, base + _CHUNK, side="right"))
        b = max(b, a + 1)
        out.append((a, b))
        a = b
    return out


def _kappa_flat(kappa: Weight, z, theta, lo, hs, nst):
    owner, s, x = _samples(z, theta, lo, hs, nst)
    th = np.broadcast_to(theta, x.shape)
    kap = kappa(s, x, th)
    start = np.concatenate([[0], np.cumsum(nst)[:-1]]).astype(np.int64)
    return np.ascontiguousarray(kap, dtype=np.float64), start


def _field_args(grid: SpacetimeGrid):
    shape = np.array(grid.shape, dtype=np.int64)
    strides = np.ones(len(shape), dtype=np.int64)
    for j in range(len(shape) - 2, -1, -1):
        strides[j] = strides[j + 1] * shape[j + 1]
    origin = np.array([-grid.t_extent] + [-grid.x_extent] * grid.n)
    spacing = np.array([grid.dt] + [grid.dx] * grid.n)
    return shape, strides, origin, spacing


_EMPTY_KAP = np.zeros(1)
_EMPTY_START = np.zeros(1, dtype=np.int64)


def forward(f: Union[ScalarField, Phantom], chart: RayChart, kappa: Optional[Weight] = None,
            plan: Optional[RaySamplingPlan] = None, grid: Optional[SpacetimeGrid] = None) -> Sinogram:
    """Weighted light ray transform on the rays of ``chart``.

    ``f`` is a sampled field (grid mode) or a phantom (analytic mode).  For a
    phantom, ``grid`` supplies the support box and the default step.
    """
    if chart.ndir == 0:
        raise ValueError("empty chart")
    kappa = resolve_weight(kappa)
    if isinstance(f, ScalarField):
        grid = f.grid
        plan = plan or RaySamplingPlan()
        if plan.mode != "grid":
            plan = RaySamplingPlan(plan.step, plan.interpolation, "grid", plan.speed)
    else:
        if grid is None:
            raise ValueError("a phantom needs a grid to define its support box")
        plan = plan or RaySamplingPlan(mode="analytic")
    if grid.n != chart.n:
        raise ValueError("chart and grid dimensions differ")
    z = chart.z_points()
    out = np.zeros((z.shape[0], chart.ndir))
    if plan.mode == "grid":
        if not isinstance(f, ScalarField):
            from .phantoms import sample_phantom
            f = sample_phantom(f, grid)
        fflat = np.ascontiguousarray(f.values).ravel()
        shape, strides, origin, spacing = _field_args(grid)
        cubic = plan.interpolation == "cubic"
    for k in range(chart.ndir):
        th = chart.directions[k]
        lo, hs, nst = _ray_nodes(z, th, grid, plan)
        if plan.mode == "grid":
            if kappa.is_unit:
                kap, kstart, use = _EMPTY_KAP, _EMPTY_START, False
            else:
                (kap, kstart), use = _kappa_flat(kappa, z, th, lo, hs, nst), True
            vals = np.empty(z.shape[0])
            _kernels.forward_rays(fflat, shape, strides, origin, spacing, z, th,
                                  lo, hs, nst, kap, kstart, use, cubic, vals)
        else:
            vals = np.zeros(z.shape[0])
            for a, b in _ray_chunks(nst):
                owner, s, x = _samples(z[a:b], th, lo[a:b], hs[a:b], nst[a:b])
                v = f.evaluate(s, x)
                if not kappa.is_unit:
                    v = v * kappa(s, x, np.broadcast_to(th, x.shape))
                vals[a:b] = np.bincount(owner, weights=v, minlength=b - a)
        # the midpoint weight is the sigma-step hs / speed
        out[:, k] = vals * hs / plan.speed
    label = f"L[{getattr(f, 'label', getattr(f, 'kind', ''))}]"
    return Sinogram(chart, out.reshape(chart.shape), label)


def adjoint_discrete(s: Sinogram, grid: SpacetimeGrid, kappa: Optional[Weight] = None,
                     plan: Optional[RaySamplingPlan] = None) -> ScalarField:
    """Transpose of the grid-mode forward map under the pairings
    <a, b>_rays = sum a b w_theta dz^n and <f, g>_grid = sum f g dt dx^n."""
    chart = s.chart
    if grid.n != chart.n:
        raise ValueError("chart and grid dimensions differ")
    kappa = resolve_weight(kappa)
    plan = plan or RaySamplingPlan()
    cubic = plan.interpolation == "cubic"
    z = chart.z_points()
    phi = s.values.reshape(-1, chart.ndir)
    shape, strides, origin, spacing = _field_args(grid)
    scale = chart.dz**chart.n / plan.speed

    def run_block(ks):
        g = np.zeros(grid.size)
        for k in ks:
            th = chart.directions[k]
            lo, hs, nst = _ray_nodes(z, th, grid, plan)
            coef = np.ascontiguousarray(phi[:, k] * chart.weights[k] * scale * hs)
            if kappa.is_unit:
                kap, kstart, use = _EMPTY_KAP, _EMPTY_START, False
            else:
                (kap, kstart), use = _kappa_flat(kappa, z, th, lo, hs, nst), True
            _kernels.adjoint_rays(g, shape, strides, origin, spacing, z, th, lo, hs, nst,
                                  kap, kstart, use, cubic, coef)
        return g

    blocks = [b for b in np.array_split(np.arange(chart.ndir), ADJOINT_BLOCKS) if b.size]
    nthreads = min(get_threads(), len(blocks))
    if nthreads > 1:
        with ThreadPoolExecutor(nthreads) as ex:
            parts = list(ex.map(run_block, blocks))
    else:
        parts = [run_block(b) for b in blocks]
    # merge in block order so the result does not depend on scheduling
    g = parts[0]
    for p in parts[1:]:
        g += p
    g /= grid.cell_volume
    return ScalarField(grid, g.reshape(grid.shape), f"L'[{s.label}]")


@dataclass(frozen=True)
class CoverageReport:
    """Fraction of (grid point, direction) pairs whose z = x - t theta fell
    outside the z-grid and were read as zero."""

    outside_pairs: int
    total_pairs: int

    @property
    def fraction_outside(self) -> float:
        return self.outside_pairs / self.total_pairs if self.total_pairs else 0.0


def adjoint_continuum(phi: Sinogram, grid: SpacetimeGrid, kappa: Optional[Weight] = None,
                      return_coverage: bool = False):
    """Back projection sum_theta w_theta kappa(t, x, theta) phi(x - t theta, theta)
    with n-linear interpolation of phi in z."""
    chart = phi.chart
    if grid.n != chart.n:
        raise ValueError("chart and grid dimensions differ")
    kappa = resolve_weight(kappa)
    n = grid.n
    tax, xax = grid.t_axis(), grid.x_axis()
    npts = grid.nx**n
    out = np.zeros((grid.nt, npts))
    outside = np.zeros(grid.nt, dtype=np.int64)
    vals = phi.values.reshape(-1, chart.ndir)
    if not kappa.is_unit:
        t_all, x_all = grid.points()
        t_all = t_all.reshape(grid.nt, npts)
        x_all = x_all.reshape(grid.nt, npts, n)
    kap = np.zeros((1, 1))
    for k in range(chart.ndir):
        th = np.ascontiguousarray(chart.directions[k])
        if not kappa.is_unit:
            kap = kappa(t_all.ravel(), x_all.reshape(-1, n),
                        np.broadcast_to(th, (t_all.size, n))).reshape(grid.nt, npts)
        _kernels.backproject_continuum(np.ascontiguousarray(vals[:, k]), chart.nz,
                                       -chart.z_extent, chart.dz, tax, xax, th, n,
                                       float(chart.weights[k]), kap, not kappa.is_unit,
                                       out, outside)
    f = ScalarField(grid, out.reshape(grid.shape), f"L'[{phi.label}]")
    if return_coverage:
        return f, CoverageReport(int(outside.sum()), grid.size * chart.ndir)
    return f


def pairing_residual(f: ScalarField, phi: Sinogram, kappa=None, plan=None) -> float:
    """|<Lf, phi> - <f, L'phi>| / (|Lf| |phi|) for the grid-mode pair."""
    lf = forward(f, phi.chart, kappa, plan)
    lt = adjoint_discrete(phi, f.grid, kappa, plan)
    a = lf.inner(phi)
    b = f.inner(lt)
    den = lf.norm() * phi.norm()
    return abs(a - b) / den if den > 0 else abs(a - b)


def slice_direction(tau: float, xi, rng=None) -> Optional[np.ndarray]:
    """A unit theta with theta . xi = -tau, or None if no such theta exists
    (i.e. the frequency is timelike).  Frequencies reachable this way are
    exactly those with |tau| <= |xi|."""
    xi = np.asarray(xi, dtype=float)
    r = float(np.linalg.norm(xi))
    if r == 0.0:
        return None if tau != 0 else np.eye(xi.size)[0]
    c = -tau / r
    if abs(c) > 1.0:
        return None
    e = xi / r
    # any unit vector orthogonal to xi
    rng = np.random.default_rng(0) if rng is None else rng
    v = rng.normal(size=xi.size)
    v -= (v @ e) * e
    v /= np.linalg.norm(v)
    th = c * e + math.sqrt(max(0.0, 1.0 - c * c)) * v
    return th / np.linalg.norm(th)


@dataclass(frozen=True)
class SliceReport:
    max_relative: float
    l2_relative: float
    per_direction: np.ndarray


def _spatial_dft(values: np.ndarray, xax: np.ndarray, freqs: list, dx: float) -> np.ndarray:
    """int exp(-i x.xi) f(., x) dx on a tensor grid of frequencies."""
    out = values.astype(np.complex128)
    for j, w in enumerate(freqs):
        E = np.exp(-1j * np.outer(xax, w)) * dx
        out = np.moveaxis(np.tensordot(out, E, axes=([1 + j], [0])), -1, 1 + j)
    return out


def fourier_slice_check(f: Union[ScalarField, Phantom], chart: RayChart,
                        grid: Optional[SpacetimeGrid] = None,
                        plan: Optional[RaySamplingPlan] = None,
                        oracle: str = "grid", sinogram: Optional[Sinogram] = None) -> SliceReport:
    """Compare the z-transform of Lf(., theta) with the spacetime transform of
    f on the slice tau = -theta . xi.

    Ray side: FFT over the z-grid with the origin phase restored.  Field side:
    for ``oracle="grid"`` a direct DFT of the sampled field evaluated exactly
    at tau = -theta . xi; for ``oracle="analytic"`` the phantom's closed-form
    transform.
    """
    if isinstance(f, ScalarField):
        grid = f.grid
        field = f
    else:
        if grid is None:
            raise ValueError("a phantom needs a grid")
        field = None
    lf = sinogram if sinogram is not None else forward(f, chart, None, plan, grid)
    n = chart.n
    nz, Z, dz = chart.nz, chart.z_extent, chart.dz
    w1 = 2.0 * np.pi * np.fft.fftfreq(nz, dz)
    # ray side: dz^n sum exp(-i z.xi) Lf, with z = -Z + j dz
    ray = np.fft.fftn(lf.values, axes=tuple(range(n))) * dz**n
    W = np.meshgrid(*([w1] * n), indexing="ij")
    phase = np.exp(1j * Z * sum(W))
    ray = ray * phase[..., None]
    if oracle == "analytic":
        if not hasattr(f, "fourier"):
            raise ValueError("analytic oracle needs a phantom with a closed-form transform")
        xi = np.stack(W, axis=-1)
    else:
        if field is None:
            from .phantoms import sample_phantom
            field = sample_phantom(f, grid)
        spat = _spatial_dft(field.values, grid.x_axis(), [w1] * n, grid.dx)
        tax = grid.t_axis()
    res = np.zeros(chart.ndir)
    num_tot = 0.0
    den_tot = 0.0
    for k in range(chart.ndir):
        th = chart.directions[k]
        tau = -sum(th[j] * W[j] for j in range(n))
        if oracle == "analytic":
            ref = f.fourier(tau, xi)
        else:
            ref = np.zeros(tau.shape, dtype=np.complex128)
            for it, t in enumerate(tax):
                ref += np.exp(-1j * t * tau) * spat[it]
            ref *= grid.dt
        diff = ray[..., k] - ref
        num = float(np.sum(np.abs(diff) ** 2))
        den = float(np.sum(np.abs(ref) ** 2))
        res[k] = math.sqrt(num / den) if den > 0 else math.sqrt(num)
        num_tot += num * chart.weights[k]
        den_tot += den * chart.weights[k]
    l2 = math.sqrt(num_tot / den_tot) if den_tot > 0 else math.sqrt(num_tot)
    return SliceReport(float(res.max()), l2, res)
