"""Weighted light ray transform along precomputed null geodesics, and the
antipodal cancellation pair on R x S^2."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geodesics import DEFAULT_STEPS, LorentzMetric, RxS2, shoot_batch
from .geometry import Weight, resolve_weight
from .phantoms import AntipodalPartner, Phantom, RidgeOnSphere, Zero, Sum

__all__ = [
    "LocalChart",
    "LocalSinogram",
    "local_transform",
    "CancellationPair",
    "build_cancellation_pair",
    "VisibilityReport",
    "singularity_visibility_report",
    "refocusing_times",
    "default_sphere_chart",
]


@dataclass
class LocalChart:
    """Chart nodes (z, a) with one geodesic record each.

    ``shape`` is the logical sinogram shape; for box charts it is
    (nz, ..., nz, ndir), otherwise (number of nodes,)."""

    metric: LorentzMetric
    z: np.ndarray
    a: np.ndarray
    length: float
    nsteps: int
    t0: float
    shape: tuple
    s: np.ndarray
    x: np.ndarray
    v: np.ndarray
    valid: np.ndarray

    @classmethod
    def from_nodes(cls, metric: LorentzMetric, z, a, length: float, nsteps: int = DEFAULT_STEPS,
                   t0: Optional[float] = None, shape=None, chunk: int = 256) -> "LocalChart":
        if not length > 0:
            raise ValueError("length must be positive")
        if nsteps < 2 or nsteps % 2:
            raise ValueError("nsteps must be an even integer >= 2 (Simpson rule)")
        t0 = metric.t0 if t0 is None else float(t0)
        z = np.atleast_2d(np.asarray(z, dtype=float))
        a = np.asarray(a, dtype=float).reshape(z.shape[0], -1)
        if z.shape[1] != metric.n or a.shape[1] != metric.n - 1:
            raise ValueError("node dimensions do not match the metric")
        B = z.shape[0]
        X = np.empty((B, nsteps + 1, metric.dim))
        V = np.empty_like(X)
        ok = np.empty(B, dtype=bool)
        for i in range(0, B, chunk):
            s, X[i:i + chunk], V[i:i + chunk], ok[i:i + chunk] = shoot_batch(
                metric, z[i:i + chunk], a[i:i + chunk], length, nsteps, t0)
        if B == 0:
            s = np.linspace(0.0, length, nsteps + 1)
        return cls(metric, z, a, float(length), nsteps, t0, tuple(shape or (B,)), s, X, V, ok)

    @classmethod
    def box(cls, metric: LorentzMetric, z_extent: float, nz: int, ndir: int, length: float,
            nsteps: int = DEFAULT_STEPS, t0: Optional[float] = None) -> "LocalChart":
        """Z = [-z_extent, z_extent]^n on nz points per axis; for n = 2 the
        directions are ndir equispaced angles, for n = 3 ndir polar x 2 ndir
        azimuthal midpoints."""
        n = metric.n
        zax = np.linspace(-z_extent, z_extent, nz) if nz > 1 else np.zeros(1)
        zs = np.stack(np.meshgrid(*([zax] * n), indexing="ij"), axis=-1).reshape(-1, n)
        if n == 2:
            dirs = (2 * math.pi * np.arange(ndir) / ndir)[:, None]
        else:
            b = (np.arange(ndir) + 0.5) * math.pi / ndir
            p = (np.arange(2 * ndir) + 0.5) * math.pi / ndir
            dirs = np.stack(np.meshgrid(b, p, indexing="ij"), axis=-1).reshape(-1, 2)
        nd = dirs.shape[0]
        Z = np.repeat(zs, nd, axis=0)
        A = np.tile(dirs, (zs.shape[0], 1))
        return cls.from_nodes(metric, Z, A, length, nsteps, t0, (nz,) * n + (nd,))

    @property
    def nodes(self) -> int:
        return self.z.shape[0]

    @property
    def step(self) -> float:
        return self.length / self.nsteps

    def spatial(self):
        """Spatial part of the record points and velocities."""
        return self.x[..., 1:], self.v[..., 1:]


@dataclass
class LocalSinogram:
    chart: LocalChart
    values: np.ndarray
    valid: np.ndarray
    label: str = ""

    def sup(self) -> float:
        v = self.values[self.valid.reshape(self.values.shape)]
        return float(np.max(np.abs(v))) if v.size else 0.0

    def l2(self) -> float:
        """Root mean square over valid nodes."""
        v = self.values[self.valid.reshape(self.values.shape)]
        return float(np.sqrt(np.mean(v * v))) if v.size else 0.0


def _simpson_weights(nsteps: int, h: float) -> np.ndarray:
    w = np.ones(nsteps + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (h / 3.0)


def local_transform(f: Phantom, chart: LocalChart, kappa: Optional[Weight] = None,
                    label: str = "") -> LocalSinogram:
    """Integral of kappa f along every record of the chart (composite Simpson
    on the record samples).  Records that leave the metric's domain are
    flagged invalid and set to NaN."""
    kap = None if kappa is None else resolve_weight(kappa)
    w = _simpson_weights(chart.nsteps, chart.step)
    out = np.full(chart.nodes, np.nan)
    ok = chart.valid
    for i in np.flatnonzero(ok):
        X = chart.x[i]
        vals = f.evaluate(X[:, 0], X[:, 1:])
        if kap is not None:
            vals = vals * kap(X[:, 0], X[:, 1:], chart.v[i, :, 1:])
        out[i] = float(w @ vals)
    return LocalSinogram(chart, out.reshape(chart.shape), ok.reshape(chart.shape), label)


def default_sphere_chart(z_extent: float = 0.3, nz: int = 7, ndir: int = 12,
                         nsteps: int = DEFAULT_STEPS, length: float = 3 * math.pi) -> LocalChart:
    """Chart around the south pole starting at t = -pi: every record passes
    close to the north pole near t = 0 and the south pole near t = pi."""
    return LocalChart.box(RxS2(t0=-math.pi, patch="south"), z_extent, nz, ndir, length, nsteps)


@dataclass
class CancellationPair:
    f1: Phantom
    f2: Phantom
    shift: float = math.pi

    @property
    def total(self) -> Phantom:
        return Sum((self.f1, self.f2))


def build_cancellation_pair(f1: Phantom, shift: float = math.pi) -> CancellationPair:
    """f2(t, y) = -f1(t - pi, -y).  Unit-speed great circles satisfy
    y(s + pi) = -y(s) and t(s + pi) = t(s) + pi, so the transform of f2 along
    any record is minus that of f1 (up to the end points of the record)."""
    if isinstance(f1, Zero):
        return CancellationPair(f1, Zero(), shift)
    if isinstance(f1, RidgeOnSphere):
        if not f1.width < math.pi / 4:
            raise ValueError("ridge width must be below pi/4 for disjoint supports")
        if not f1.time_width < math.pi / 4:
            raise ValueError("ridge time width must be below pi/4 for disjoint supports")
    return CancellationPair(f1, AntipodalPartner(f1, shift), shift)


@dataclass
class VisibilityReport:
    sup1: float
    sup2: float
    sup_sum: float
    l2_1: float
    l2_2: float
    l2_sum: float
    ratio: float
    profiles: dict
    lf1: LocalSinogram
    lf2: LocalSinogram

    def rows(self):
        return [("f1", self.sup1, self.l2_1), ("f2", self.sup2, self.l2_2),
                ("f1+f2", self.sup_sum, self.l2_sum)]


def singularity_visibility_report(pair: CancellationPair, chart: LocalChart,
                                  kappa: Optional[Weight] = None) -> VisibilityReport:
    """Sup and RMS norms of L f1, L f2 and L(f1 + f2), plus per-direction
    profiles through the centre of the chart."""
    l1 = local_transform(pair.f1, chart, kappa, "L f1")
    l2 = local_transform(pair.f2, chart, kappa, "L f2")
    tot = LocalSinogram(chart, l1.values + l2.values, l1.valid, "L(f1+f2)")
    s1 = l1.sup()
    ratio = tot.sup() / s1 if s1 > 0 else 0.0
    profiles = {}
    if len(chart.shape) > 1:
        mid = tuple(k // 2 for k in chart.shape[:-1])
        profiles = {"direction": np.arange(chart.shape[-1]),
                    "L f1": l1.values[mid], "L f2": l2.values[mid], "L(f1+f2)": tot.values[mid]}
    return VisibilityReport(s1, l2.sup(), tot.sup(), l1.l2(), l2.l2(), tot.l2(), ratio, profiles, l1, l2)


def refocusing_times(chart: LocalChart, node: int = 0, target=None, tol: float = 1e-6):
    """Times t along a record at which y returns to +-y(0) (R x S^2 records).

    Returns a list of (t, sign) with sign = -1 for the antipodal point."""
    x = chart.x[node]
    y0 = x[0, 1:] if target is None else np.asarray(target, dtype=float)
    c = x[:, 1:] @ y0
    out = []
    for sgn in (1.0, -1.0):
        d = 1.0 - sgn * c
        for k in range(1, d.size - 1):
            if d[k] <= d[k - 1] and d[k] < d[k + 1] and d[k] < 1e-3:
                # parabola through the three samples
                den = d[k - 1] - 2 * d[k] + d[k + 1]
                off = 0.5 * (d[k - 1] - d[k + 1]) / den if den > 0 else 0.0
                t = x[k, 0] + off * (x[k + 1, 0] - x[k, 0])
                out.append((float(t), int(sgn)))
    return sorted(out)
