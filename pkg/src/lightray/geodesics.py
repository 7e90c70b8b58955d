"""Lorentzian metrics, null geodesics, Jacobi fields and conjugate points.

Every metric works on a state (x, v) of ``dim`` coordinates.  Coordinate
metrics (Minkowski, FLRW, semigeodesic) use x = (t, x^1, ..., x^n).  The
product R x S^2 is integrated in the ambient embedding x = (t, y) with y a
unit vector of R^3, which avoids chart changes near antipodal points.

Geodesics start on the slice t = t0 at a chart point z with velocity
(1, theta(z, a)), theta being a unit vector for the spatial metric.  Jacobi
fields are obtained by integrating the linearized geodesic flow with the same
RK4 steps as the geodesic; the linearized flow of a geodesic family solves the
Jacobi equation, so this is equivalent to integrating J'' + R(J, g')g' = 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize

from .geometry import Covector

__all__ = [
    "LorentzMetric",
    "CoordinateMetric",
    "Minkowski",
    "FLRW",
    "SemiGeodesic",
    "ProductStatic",
    "RxS2",
    "GeodesicRecord",
    "JacobiBundle",
    "ConjugatePair",
    "ConjugateReport",
    "RelationData",
    "shoot_null_geodesic",
    "shoot_batch",
    "propagate_jacobi",
    "detect_conjugate",
    "canonical_relation_data",
    "lightlike_statistic",
    "conjugate_covectors",
    "minkowski_theta_hat",
    "travel_time_linearization_check",
    "TravelTimeReport",
]

DEFAULT_STEPS = 2048
DEFAULT_STEP = math.pi / 1024
H_FD = 1e-5
H_CHART = 1e-3


def _fd5(fun, p, h=H_CHART):
    """Five-point central derivative of fun along each coordinate of p.

    Returns an array of shape fun(p).shape + (len(p),)."""
    p = np.asarray(p, dtype=float)
    cols = []
    for i in range(p.size):
        e = np.zeros_like(p)
        e[i] = h
        d = (-fun(p + 2 * e) + 8 * fun(p + e) - 8 * fun(p - e) + fun(p - 2 * e)) / (12 * h)
        cols.append(d)
    return np.stack(cols, axis=-1)


def _direction(n: int, a) -> np.ndarray:
    """Euclidean unit vector from direction parameters a (n - 1 of them)."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if n == 2:
        return np.array([math.cos(a[0]), math.sin(a[0])])
    b, p = a[0], a[1]
    return np.array([math.sin(b) * math.cos(p), math.sin(b) * math.sin(p), math.cos(b)])


class LorentzMetric:
    """Interface shared by all metric plug-ins (see module docstring)."""

    kind = "metric"
    n: int
    dim: int
    t0: float = 0.0

    # geometry ---------------------------------------------------------
    def g(self, x):
        raise NotImplementedError

    def g_inv(self, x):
        return np.linalg.inv(self.g(x))

    def accel(self, x, v):
        raise NotImplementedError

    def accel_jac(self, x, v):
        raise NotImplementedError

    def covariant(self, x, v, J, Jdot):
        raise NotImplementedError

    def project(self, x, v):
        return x, v

    def in_domain(self, x):
        return np.ones(np.shape(x)[:-1], dtype=bool)

    def completion(self, x, v):
        """Fixed vectors appended to [K_1..K_{n-1}, v] to form a square matrix."""
        e = np.zeros(self.dim)
        e[0] = 1.0
        return [e]

    def check_signature(self, x) -> bool:
        """Exactly one negative eigenvalue (on the tangent space)."""
        ev = np.linalg.eigvalsh(self._tangent_gram(np.asarray(x, float)))
        return bool(np.sum(ev < 0) == 1 and np.sum(ev > 0) == self.n and np.all(ev != 0))

    def _tangent_gram(self, x):
        return self.g(x)

    # chart ------------------------------------------------------------
    def chart_point(self, z, a, t0=None):
        """(x0, v0) of the geodesic with chart parameters (z, a)."""
        raise NotImplementedError

    def h_chart(self, z, t0=None):
        """Spatial metric in chart coordinates at the start point."""
        raise NotImplementedError

    def theta_chart(self, z, a, t0=None):
        """theta(z, a) in chart coordinates, unit for h_chart."""
        raise NotImplementedError

    def initial_variations(self, z, a, t0=None):
        """Initial (delta x, delta v) for the fields M_j (z-derivatives) and
        J_k (a-derivatives); arrays of shape (n, dim) and (n - 1, dim)."""
        z = np.asarray(z, dtype=float)
        a = np.atleast_1d(np.asarray(a, dtype=float))
        fx = lambda zz: self.chart_point(zz, a, t0)[0]
        fv = lambda zz: self.chart_point(zz, a, t0)[1]
        gv = lambda aa: self.chart_point(z, aa, t0)[1]
        Mx = _fd5(fx, z).T
        Mv = _fd5(fv, z).T
        Jv = _fd5(gv, a).T
        Jx = np.zeros_like(Jv)
        return Mx, Mv, Jx, Jv


class CoordinateMetric(LorentzMetric):
    """Metric given in coordinates (t, x) by g, dg and d2g.

    dg[..., r, a, b] = d_r g_ab and d2g[..., r, s, a, b] = d_r d_s g_ab."""

    def dg(self, x):
        raise NotImplementedError

    def d2g(self, x):
        raise NotImplementedError

    def christoffel(self, x):
        gi = self.g_inv(x)
        dg = self.dg(x)
        # low[..., a, k, b] = (d_a g_kb + d_b g_ka - d_k g_ab) / 2
        low = 0.5 * (dg + np.einsum("...bka->...akb", dg) - np.swapaxes(dg, -3, -2))
        return np.einsum("...mk,...akb->...mab", gi, low)

    def _dchristoffel(self, x):
        gi = self.g_inv(x)
        dg = self.dg(x)
        d2 = self.d2g(x)
        low = 0.5 * (dg + np.einsum("...bka->...akb", dg) - np.swapaxes(dg, -3, -2))
        # d_r low[a, k, b]
        dlow = 0.5 * (d2 + np.einsum("...rbka->...rakb", d2) - np.swapaxes(d2, -3, -2))
        dgi = -np.einsum("...mi,...rij,...jk->...rmk", gi, dg, gi)
        return (np.einsum("...rmk,...akb->...rmab", dgi, low)
                + np.einsum("...mk,...rakb->...rmab", gi, dlow))

    def accel(self, x, v):
        G = self.christoffel(x)
        return -np.einsum("...mab,...a,...b->...m", G, v, v)

    def accel_jac(self, x, v):
        G = self.christoffel(x)
        dG = self._dchristoffel(x)
        Ax = -np.einsum("...rmab,...a,...b->...mr", dG, v, v)
        Av = -2.0 * np.einsum("...mab,...a->...mb", G, v)
        return Ax, Av

    def covariant(self, x, v, J, Jdot):
        G = self.christoffel(x)
        return Jdot + np.einsum("...mab,...a,...b->...m", G, v, J)

    def gprime(self, x):
        return self.g(x)[..., 1:, 1:]

    def chart_point(self, z, a, t0=None):
        t0 = self.t0 if t0 is None else t0
        z = np.asarray(z, dtype=float)
        x0 = np.concatenate([[t0], z])
        h = self.gprime(x0)
        u = _direction(self.n, a)
        th = u / math.sqrt(u @ h @ u)
        return x0, np.concatenate([[1.0], th])

    def h_chart(self, z, t0=None):
        t0 = self.t0 if t0 is None else t0
        return self.gprime(np.concatenate([[t0], np.asarray(z, float)]))

    def theta_chart(self, z, a, t0=None):
        return self.chart_point(z, a, t0)[1][1:]


class Minkowski(CoordinateMetric):
    kind = "minkowski"

    def __init__(self, n: int = 2, t0: float = 0.0):
        self.n = n
        self.dim = n + 1
        self.t0 = t0
        self._eta = np.diag([-1.0] + [1.0] * n)

    def g(self, x):
        return np.broadcast_to(self._eta, np.shape(x)[:-1] + self._eta.shape).copy()

    def g_inv(self, x):
        return self.g(x)

    def dg(self, x):
        d = self.dim
        return np.zeros(np.shape(x)[:-1] + (d, d, d))

    def d2g(self, x):
        d = self.dim
        return np.zeros(np.shape(x)[:-1] + (d, d, d, d))

    def christoffel(self, x):
        d = self.dim
        return np.zeros(np.shape(x)[:-1] + (d, d, d))

    def accel(self, x, v):
        return np.zeros(np.shape(v))

    def accel_jac(self, x, v):
        d = self.dim
        z = np.zeros(np.shape(x)[:-1] + (d, d))
        return z, z.copy()

    def covariant(self, x, v, J, Jdot):
        return np.array(Jdot, dtype=float)


class FLRW(CoordinateMetric):
    """-dt^2 + a(t)^2 |dx|^2 with analytic a, a', a''."""

    kind = "flrw"

    def __init__(self, a: Callable, da: Callable, d2a: Callable, n: int = 2, t0: float = 1.0,
                 name: str = "flrw"):
        self.a, self.da, self.d2a = a, da, d2a
        self.n = n
        self.dim = n + 1
        self.t0 = t0
        self.name = name

    @classmethod
    def einstein_de_sitter(cls, n: int = 2, t0: float = 1.0) -> "FLRW":
        """a(t) = t^(2/3); the default start slice t0 = 1 keeps away from t = 0."""
        return cls(lambda t: np.cbrt(t) ** 2,
                   lambda t: (2.0 / 3.0) / np.cbrt(t),
                   lambda t: (-2.0 / 9.0) / (np.cbrt(t) ** 4),
                   n, t0, "einstein-de-sitter")

    def _a(self, x):
        t = np.asarray(x)[..., 0]
        return self.a(t), self.da(t), self.d2a(t)

    def in_domain(self, x):
        with np.errstate(invalid="ignore"):
            a = self.a(np.asarray(x)[..., 0])
        return np.isfinite(a) & (a > 0)

    def g(self, x):
        a, _, _ = self._a(x)
        d = self.dim
        out = np.zeros(np.shape(x)[:-1] + (d, d))
        out[..., 0, 0] = -1.0
        for i in range(1, d):
            out[..., i, i] = a * a
        return out

    def g_inv(self, x):
        a, _, _ = self._a(x)
        d = self.dim
        out = np.zeros(np.shape(x)[:-1] + (d, d))
        out[..., 0, 0] = -1.0
        for i in range(1, d):
            out[..., i, i] = 1.0 / (a * a)
        return out

    def dg(self, x):
        a, da, _ = self._a(x)
        d = self.dim
        out = np.zeros(np.shape(x)[:-1] + (d, d, d))
        for i in range(1, d):
            out[..., 0, i, i] = 2.0 * a * da
        return out

    def d2g(self, x):
        a, da, dda = self._a(x)
        d = self.dim
        out = np.zeros(np.shape(x)[:-1] + (d, d, d, d))
        for i in range(1, d):
            out[..., 0, 0, i, i] = 2.0 * (da * da + a * dda)
        return out

    def christoffel(self, x):
        a, da, _ = self._a(x)
        d = self.dim
        G = np.zeros(np.shape(x)[:-1] + (d, d, d))
        for i in range(1, d):
            G[..., 0, i, i] = a * da
            G[..., i, 0, i] = da / a
            G[..., i, i, 0] = da / a
        return G


class SemiGeodesic(CoordinateMetric):
    """-dt^2 + g'(t, x) with g' supplied as a function of x = (t, x^1..x^n).

    ``gprime_fn(x)`` maps (..., n+1) to (..., n, n).  Derivatives may be given
    as ``dgprime_fn`` (..., n+1, n, n) and ``d2gprime_fn`` (..., n+1, n+1, n, n);
    otherwise central differences with step ``h_fd`` are used, which costs
    accuracy (about h_fd^2 for first and h_fd^2 / h_fd^2 scaled error for
    second derivatives)."""

    kind = "semigeodesic"

    def __init__(self, gprime_fn: Callable, n: int, dgprime_fn=None, d2gprime_fn=None,
                 t0: float = 0.0, h_fd: float = H_FD):
        self.gp = gprime_fn
        self.dgp = dgprime_fn
        self.d2gp = d2gprime_fn
        self.n = n
        self.dim = n + 1
        self.t0 = t0
        self.h_fd = h_fd

    def _fd(self, fun, x):
        x = np.asarray(x, dtype=float)
        h = self.h_fd
        cols = []
        for r in range(self.dim):
            e = np.zeros(self.dim)
            e[r] = h
            cols.append((fun(x + e) - fun(x - e)) / (2 * h))
        return np.stack(cols, axis=-3 if fun is self.gp else -4)

    def _embed(self, sp, lead):
        d = self.dim
        out = np.zeros(sp.shape[:lead] + (d, d))
        out[..., 1:, 1:] = sp
        return out

    def g(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (self.dim, self.dim))
        out[..., 0, 0] = -1.0
        out[..., 1:, 1:] = self.gp(x)
        return out

    def g_inv(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (self.dim, self.dim))
        out[..., 0, 0] = -1.0
        out[..., 1:, 1:] = np.linalg.inv(self.gp(x))
        return out

    def _dgp(self, x):
        if self.dgp is not None:
            return self.dgp(x)
        return self._fd(self.gp, x)

    def _d2gp(self, x):
        if self.d2gp is not None:
            return self.d2gp(x)
        x = np.asarray(x, dtype=float)
        h = self.h_fd
        cols = []
        for r in range(self.dim):
            e = np.zeros(self.dim)
            e[r] = h
            cols.append((self._dgp(x + e) - self._dgp(x - e)) / (2 * h))
        return np.stack(cols, axis=-4)

    def dg(self, x):
        x = np.asarray(x, dtype=float)
        d = self.dim
        out = np.zeros(x.shape[:-1] + (d, d, d))
        out[..., :, 1:, 1:] = self._dgp(x)
        return out

    def d2g(self, x):
        x = np.asarray(x, dtype=float)
        d = self.dim
        out = np.zeros(x.shape[:-1] + (d, d, d, d))
        out[..., :, :, 1:, 1:] = self._d2gp(x)
        return out

    def perturbed(self, h_fn: Callable, eps: float, dh_fn=None, d2h_fn=None) -> "SemiGeodesic":
        """g' + eps h with h given like g' (spatial tensor, no dt components)."""
        gp, dgp, d2gp = self.gp, self.dgp, self.d2gp
        both = dgp is not None and dh_fn is not None
        both2 = d2gp is not None and d2h_fn is not None
        return SemiGeodesic(
            lambda x: gp(x) + eps * h_fn(x), self.n,
            (lambda x: dgp(x) + eps * dh_fn(x)) if both else None,
            (lambda x: d2gp(x) + eps * d2h_fn(x)) if both2 else None,
            self.t0, self.h_fd)


def ProductStatic(gprime_fn: Callable, n: int, dgprime_fn=None, d2gprime_fn=None,
                  t0: float = 0.0) -> SemiGeodesic:
    """-dt^2 + g'(x): the time-independent special case.  The callables take
    the spatial point only; time derivatives are zero."""
    def gp(x):
        return gprime_fn(np.asarray(x)[..., 1:])

    dgp = d2gp = None
    if dgprime_fn is not None:
        def dgp(x):
            x = np.asarray(x)
            sp = dgprime_fn(x[..., 1:])
            return np.concatenate([np.zeros_like(sp[..., :1, :, :]), sp], axis=-3)
    if d2gprime_fn is not None:
        def d2gp(x):
            x = np.asarray(x)
            sp = d2gprime_fn(x[..., 1:])
            sh = sp.shape
            out = np.zeros(sh[:-4] + (n + 1, n + 1) + sh[-2:])
            out[..., 1:, 1:, :, :] = sp
            return out
    m = SemiGeodesic(gp, n, dgp, d2gp, t0)
    m.kind = "product-static"
    return m


def _stereo(z, patch):
    z = np.asarray(z, dtype=float)
    q = float(z @ z)
    sgn = 1.0 if patch == "north" else -1.0
    y = np.array([2 * z[0], 2 * z[1], sgn * (1.0 - q)]) / (1.0 + q)
    # d y / d z_i
    J = np.empty((3, 2))
    for i in range(2):
        num_d = np.zeros(3)
        num_d[i] = 2.0
        num_d[2] = sgn * (-2.0 * z[i])
        num = np.array([2 * z[0], 2 * z[1], sgn * (1.0 - q)])
        J[:, i] = num_d / (1.0 + q) - num * 2.0 * z[i] / (1.0 + q) ** 2
    return y, J


class RxS2(LorentzMetric):
    """-dt^2 + round metric of S^2, integrated in R x R^3.

    Chart: stereographic coordinates z on the ``patch`` ("south": z = 0 is
    (0, 0, -1); "north": z = 0 is (0, 0, 1)), direction theta = cos a e_1 +
    sin a e_2 with e_i the normalized coordinate vectors.  The default start
    slice t0 = -pi puts a geodesic from the south patch through the north pole
    at t = 0 and back to the south pole at t = pi."""

    kind = "rxs2"

    def __init__(self, t0: float = -math.pi, patch: str = "south"):
        if patch not in ("south", "north"):
            raise ValueError("patch must be 'south' or 'north'")
        self.n = 2
        self.dim = 4
        self.t0 = t0
        self.patch = patch
        self._eta = np.diag([-1.0, 1.0, 1.0, 1.0])

    def g(self, x):
        return np.broadcast_to(self._eta, np.shape(x)[:-1] + (4, 4)).copy()

    def g_inv(self, x):
        # acting on covectors whose spatial part is tangent to the sphere
        return self.g(x)

    def _tangent_gram(self, x):
        y = x[1:] / np.linalg.norm(x[1:])
        # orthonormal tangent frame at y
        a = np.array([1.0, 0, 0]) if abs(y[0]) < 0.9 else np.array([0, 1.0, 0])
        e1 = a - (a @ y) * y
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(y, e1)
        B = np.zeros((4, 3))
        B[0, 0] = 1.0
        B[1:, 1] = e1
        B[1:, 2] = e2
        return B.T @ self._eta @ B

    def accel(self, x, v):
        y = x[..., 1:]
        w = v[..., 1:]
        out = np.zeros(np.shape(v))
        out[..., 1:] = -np.sum(w * w, axis=-1)[..., None] * y
        return out

    def accel_jac(self, x, v):
        y = x[..., 1:]
        w = v[..., 1:]
        sh = np.shape(x)[:-1]
        Ax = np.zeros(sh + (4, 4))
        Av = np.zeros(sh + (4, 4))
        ww = np.sum(w * w, axis=-1)
        for i in range(3):
            Ax[..., 1 + i, 1 + i] = -ww
        Av[..., 1:, 1:] = -2.0 * y[..., :, None] * w[..., None, :]
        return Ax, Av

    def covariant(self, x, v, J, Jdot):
        y = x[..., 1:]
        y = y / np.linalg.norm(y, axis=-1, keepdims=True)
        out = np.array(Jdot, dtype=float)
        w = out[..., 1:]
        out[..., 1:] = w - np.sum(w * y, axis=-1)[..., None] * y
        return out

    def project(self, x, v):
        x = np.array(x, dtype=float)
        v = np.array(v, dtype=float)
        y = x[..., 1:] / np.linalg.norm(x[..., 1:], axis=-1, keepdims=True)
        x[..., 1:] = y
        w = v[..., 1:]
        v[..., 1:] = w - np.sum(w * y, axis=-1)[..., None] * y
        return x, v

    def completion(self, x, v):
        e = np.zeros(4)
        e[0] = 1.0
        nrm = np.zeros(4)
        nrm[1:] = x[1:] / np.linalg.norm(x[1:])
        return [e, nrm]

    def chart_point(self, z, a, t0=None):
        t0 = self.t0 if t0 is None else t0
        a = float(np.ravel(a)[0])
        y, Jz = _stereo(z, self.patch)
        e = Jz / np.linalg.norm(Jz, axis=0)
        th = math.cos(a) * e[:, 0] + math.sin(a) * e[:, 1]
        return np.concatenate([[t0], y]), np.concatenate([[1.0], th])

    def h_chart(self, z, t0=None):
        q = float(np.asarray(z) @ np.asarray(z))
        lam = 2.0 / (1.0 + q)
        return lam * lam * np.eye(2)

    def theta_chart(self, z, a, t0=None):
        q = float(np.asarray(z) @ np.asarray(z))
        lam = 2.0 / (1.0 + q)
        a = float(np.ravel(a)[0])
        return np.array([math.cos(a), math.sin(a)]) / lam

    def chart_from_point(self, y):
        """Stereographic coordinates of a unit vector y in this patch."""
        y = np.asarray(y, dtype=float)
        sgn = 1.0 if self.patch == "north" else -1.0
        return y[:2] / (1.0 + sgn * y[2])


# ----------------------------------------------------------------------
# integration


def _rk4_run(metric: LorentzMetric, x0, v0, h: float, nsteps: int, variations=None,
             stop_outside: bool = True):
    """Fixed-step RK4 for geodesics (batched over leading axes) and, if
    given, their linearizations.  ``variations`` = (dX, dV) of shape
    (..., m, dim).  Returns sample arrays with a step axis after the batch
    axes, plus the index of the first sample outside the domain."""
    x = np.array(x0, dtype=float)
    v = np.array(v0, dtype=float)
    batch = x.shape[:-1]
    X = np.empty(batch + (nsteps + 1, metric.dim))
    V = np.empty_like(X)
    X[..., 0, :] = x
    V[..., 0, :] = v
    lin = variations is not None
    if lin:
        dx, dv = (np.array(a, dtype=float) for a in variations)
        DX = np.empty(batch + (nsteps + 1,) + dx.shape[-2:])
        DV = np.empty_like(DX)
        DX[..., 0, :, :] = dx
        DV[..., 0, :, :] = dv

    def rhs(x, v, dx=None, dv=None):
        a = metric.accel(x, v)
        if dx is None:
            return v, a, None, None
        Ax, Av = metric.accel_jac(x, v)
        ddv = np.einsum("...ij,...mj->...mi", Ax, dx) + np.einsum("...ij,...mj->...mi", Av, dv)
        return v, a, dv, ddv

    exit_at = np.full(batch, nsteps + 1, dtype=np.int64)
    for k in range(nsteps):
        if lin:
            k1 = rhs(x, v, dx, dv)
            k2 = rhs(x + 0.5 * h * k1[0], v + 0.5 * h * k1[1], dx + 0.5 * h * k1[2], dv + 0.5 * h * k1[3])
            k3 = rhs(x + 0.5 * h * k2[0], v + 0.5 * h * k2[1], dx + 0.5 * h * k2[2], dv + 0.5 * h * k2[3])
            k4 = rhs(x + h * k3[0], v + h * k3[1], dx + h * k3[2], dv + h * k3[3])
            dx = dx + h / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
            dv = dv + h / 6.0 * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
            DX[..., k + 1, :, :] = dx
            DV[..., k + 1, :, :] = dv
        else:
            k1 = rhs(x, v)
            k2 = rhs(x + 0.5 * h * k1[0], v + 0.5 * h * k1[1])
            k3 = rhs(x + 0.5 * h * k2[0], v + 0.5 * h * k2[1])
            k4 = rhs(x + h * k3[0], v + h * k3[1])
        x = x + h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        v = v + h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        x, v = metric.project(x, v)
        X[..., k + 1, :] = x
        V[..., k + 1, :] = v
        ok = metric.in_domain(x) & np.all(np.isfinite(x), axis=-1) & np.all(np.isfinite(v), axis=-1)
        newly = (~ok) & (exit_at > nsteps)
        exit_at[newly] = k + 1
        if stop_outside and np.all(exit_at <= nsteps):
            X[..., k + 2:, :] = np.nan
            V[..., k + 2:, :] = np.nan
            break
    if lin:
        return X, V, exit_at, DX, DV
    return X, V, exit_at


@dataclass
class GeodesicRecord:
    """Samples of one null geodesic on [0, length] at a fixed RK4 step."""

    metric: LorentzMetric
    z: np.ndarray
    a: np.ndarray
    t0: float
    s: np.ndarray
    x: np.ndarray
    v: np.ndarray
    step: float
    null_defect: np.ndarray
    theta_norm_error: float
    truncated: bool = False
    exit_index: Optional[int] = None

    @property
    def length(self) -> float:
        return float(self.s[-1])

    @property
    def max_null_defect(self) -> float:
        d = self.null_defect[np.isfinite(self.null_defect)]
        return float(np.max(np.abs(d))) if d.size else float("nan")


def _null_defect(metric, X, V):
    G = metric.g(X)
    return np.einsum("...i,...ij,...j->...", V, G, V)


def shoot_null_geodesic(metric: LorentzMetric, z, a, length: float, step: Optional[float] = None,
                        t0: Optional[float] = None) -> GeodesicRecord:
    """Integrate the null geodesic with chart parameters (z, a) over [0, length]
    by RK4 with a fixed step (default pi / 1024), rounded down to divide the
    length evenly."""
    if not length > 0:
        raise ValueError("length must be positive")
    if step is not None and not step > 0:
        raise ValueError("step must be positive")
    t0 = metric.t0 if t0 is None else t0
    step = DEFAULT_STEP if step is None else step
    nsteps = max(1, int(math.ceil(length / step - 1e-9)))
    h = length / nsteps
    z = np.atleast_1d(np.asarray(z, dtype=float))
    a = np.atleast_1d(np.asarray(a, dtype=float))
    x0, v0 = metric.chart_point(z, a, t0)
    th = metric.theta_chart(z, a, t0)
    hz = metric.h_chart(z, t0)
    terr = abs(float(th @ hz @ th) - 1.0)
    X, V, ex = _rk4_run(metric, x0, v0, h, nsteps)
    trunc = bool(ex <= nsteps)
    s = h * np.arange(nsteps + 1)
    return GeodesicRecord(metric, z, a, t0, s, X, V, h, _null_defect(metric, X, V), terr,
                          trunc, int(ex) if trunc else None)


def shoot_batch(metric: LorentzMetric, zs, as_, length: float, nsteps: int = DEFAULT_STEPS,
                t0: Optional[float] = None):
    """Integrate many geodesics at once.  Returns (s, X, V, valid) with X, V of
    shape (B, nsteps + 1, dim) and valid[b] False for records leaving the
    domain."""
    t0 = metric.t0 if t0 is None else t0
    zs = np.asarray(zs, dtype=float)
    as_ = np.asarray(as_, dtype=float).reshape(zs.shape[0], -1)
    init = [metric.chart_point(z, a, t0) for z, a in zip(zs, as_)]
    x0 = np.array([p[0] for p in init])
    v0 = np.array([p[1] for p in init])
    h = length / nsteps
    X, V, ex = _rk4_run(metric, x0, v0, h, nsteps, stop_outside=False)
    return h * np.arange(nsteps + 1), X, V, ex > nsteps


# ----------------------------------------------------------------------
# Jacobi fields


@dataclass
class JacobiBundle:
    """Jacobi fields along a record: M_1..M_n, J_1..J_{n-1}, gamma-dot and
    s * gamma-dot, in that order.

    ``values[f, k]`` is field f at sample k, ``derivs`` its covariant
    derivative and ``coord_derivs`` its coordinate derivative."""

    record: GeodesicRecord
    names: list
    values: np.ndarray
    derivs: np.ndarray
    coord_derivs: np.ndarray
    geodesic_mismatch: float

    @property
    def metric(self):
        return self.record.metric

    @property
    def nfields(self) -> int:
        return self.values.shape[0]

    def at(self, s: float):
        """State (x, v) and field values / covariant derivatives at parameter s,
        by one RK4 step from the nearest earlier sample."""
        rec = self.record
        h = rec.step
        k = int(min(max(math.floor(s / h), 0), rec.s.size - 1))
        if k == rec.s.size - 1 and s > rec.s[-1] + 1e-12:
            raise ValueError("parameter beyond the record")
        ds = s - rec.s[k]
        m = self.metric
        x0, v0 = rec.x[k], rec.v[k]
        nvar = self.nfields - 2
        dX = self.values[:nvar, k]
        dV = self.coord_derivs[:nvar, k]
        if abs(ds) > 0:
            X, V, _, DX, DV = _rk4_run(m, x0, v0, ds, 1, (dX, dV))
            x, v, dx, dv = X[1], V[1], DX[1], DV[1]
        else:
            x, v, dx, dv = x0, v0, dX, dV
        vals = np.vstack([dx, v[None, :], s * v[None, :]])
        cov = np.vstack([m.covariant(x, v, dx, dv), np.zeros((1, m.dim)), v[None, :]])
        return x, v, vals, cov

    def wronskian(self, c1, c2) -> np.ndarray:
        """(I, J')_g - (I', J)_g along the record for I = c1 . fields, J = c2 . fields."""
        I = np.tensordot(c1, self.values, axes=1)
        Ip = np.tensordot(c1, self.derivs, axes=1)
        J = np.tensordot(c2, self.values, axes=1)
        Jp = np.tensordot(c2, self.derivs, axes=1)
        G = self.metric.g(self.record.x)
        return (np.einsum("ki,kij,kj->k", I, G, Jp) - np.einsum("ki,kij,kj->k", Ip, G, J))


def propagate_jacobi(record: GeodesicRecord) -> JacobiBundle:
    """Jacobi fields of the chart family through ``record``.

    M_j and J_k are the derivatives of the geodesic with respect to z^j and
    a^k; they are integrated as the linearized flow with the record's steps.
    gamma-dot and s gamma-dot are filled in from the record itself."""
    m = record.metric
    if record.truncated:
        raise ValueError(f"record left the domain at sample {record.exit_index}")
    Mx, Mv, Jx, Jv = m.initial_variations(record.z, record.a, record.t0)
    dX0 = np.vstack([Mx, Jx])
    dV0 = np.vstack([Mv, Jv])
    x0, v0 = record.x[0], record.v[0]
    nsteps = record.s.size - 1
    X, V, ex, DX, DV = _rk4_run(m, x0, v0, record.step, nsteps, (dX0, dV0))
    if not np.all(np.isfinite(DX)) or not np.all(np.isfinite(DV)):
        bad = int(np.argmax(~np.all(np.isfinite(DX.reshape(nsteps + 1, -1)), axis=1)))
        raise FloatingPointError(f"Jacobi integration failed near s = {record.s[bad]:.6g}")
    mismatch = float(np.max(np.abs(X - record.x)))
    # fields first: (m, k, dim)
    vals = np.moveaxis(DX, 1, 0)
    cvel = np.moveaxis(DV, 1, 0)
    cov = m.covariant(X[None], V[None], vals, cvel)
    s = record.s
    gd = record.v
    acc = m.accel(record.x, record.v)
    values = np.concatenate([vals, gd[None], (s[:, None] * gd)[None]], axis=0)
    derivs = np.concatenate([cov, np.zeros_like(gd)[None], gd[None]], axis=0)
    cderiv = np.concatenate([cvel, acc[None], (gd + s[:, None] * acc)[None]], axis=0)
    n = m.n
    names = [f"M{j + 1}" for j in range(n)] + [f"J{k + 1}" for k in range(n - 1)] + ["gdot", "s*gdot"]
    return JacobiBundle(record, names, values, derivs, cderiv, mismatch)


# ----------------------------------------------------------------------
# conjugate points


@dataclass
class ConjugatePair:
    s1: float
    s2: float
    multiplicity: int
    jprime_s1: np.ndarray
    jprime_s2: np.ndarray
    coefficients: np.ndarray
    residual: float


@dataclass
class ConjugateReport:
    s1: float
    pairs: list = field(default_factory=list)
    samples: Optional[np.ndarray] = None
    determinant: Optional[np.ndarray] = None

    @property
    def parameters(self) -> list:
        return [p.s2 for p in self.pairs]


def _vanishing_basis(bundle: JacobiBundle, s1: float):
    """Coefficient vectors of a basis of fields vanishing at s1, with the
    trivial field (s - s1) gamma-dot removed."""
    _, _, vals, _ = bundle.at(s1)
    nf = bundle.nfields
    A = vals.T  # dim x nf
    u, sv, vt = np.linalg.svd(A)
    tol = 1e-9 * max(sv[0], 1.0)
    rank = int(np.sum(sv > tol))
    null = vt[rank:].T  # nf x k
    triv = np.zeros(nf)
    triv[-1] = 1.0
    triv[-2] = -s1
    triv /= np.linalg.norm(triv)
    # orthogonal complement of the trivial direction inside the null space
    P = null - np.outer(triv, triv @ null)
    u2, sv2, _ = np.linalg.svd(P, full_matrices=False)
    keep = sv2 > 1e-8
    return u2[:, keep]


def _conj_matrix(bundle, C, s):
    x, v, vals, cov = bundle.at(s)
    K = C.T @ vals  # (k, dim)
    cols = [K[i] for i in range(K.shape[0])] + [v] + bundle.metric.completion(x, v)
    return np.array(cols).T, K, v, cov


def detect_conjugate(bundle: JacobiBundle, s1: float = 0.0, tol_conj: float = 1e-6,
                     exclude: Optional[float] = None) -> ConjugateReport:
    """Parameters s2 conjugate to s1 along the record.

    The fields vanishing at s1 (modulo (s - s1) gamma-dot) are tracked through
    det[K_1 .. K_{n-1}, gamma-dot, completion].  Sign changes and near-zero
    local minima of the scaled determinant are refined to ``tol_conj`` in s."""
    rec = bundle.record
    if not (0.0 <= s1 <= rec.length):
        raise ValueError("s1 outside the record")
    C = _vanishing_basis(bundle, s1)
    h = rec.step
    exclude = 4 * h if exclude is None else exclude
    nf = bundle.nfields
    s = rec.s
    Kvals = np.einsum("fi,fkd->ikd", C, bundle.values)  # (k, ns, dim)
    D = np.empty(s.size)
    for j in range(s.size):
        cols = [Kvals[i, j] for i in range(C.shape[1])] + [rec.v[j]] + bundle.metric.completion(rec.x[j], rec.v[j])
        D[j] = np.linalg.det(np.array(cols).T)
    scale = np.max(np.abs(D)) or 1.0
    Dn = D / scale
    mask = np.abs(s - s1) > exclude
    cand = []
    for j in range(s.size - 1):
        if mask[j] and mask[j + 1] and Dn[j] * Dn[j + 1] < 0:
            cand.append(("sign", s[j], s[j + 1]))
    absd = np.abs(Dn)
    for j in range(1, s.size - 1):
        if mask[j - 1] and mask[j + 1] and absd[j] <= absd[j - 1] and absd[j] < absd[j + 1] \
                and absd[j] < 1e-3 and Dn[j - 1] * Dn[j + 1] > 0:
            cand.append(("min", s[j - 1], s[j + 1]))

    def det_at(t):
        M, _, _, _ = _conj_matrix(bundle, C, t)
        return np.linalg.det(M) / scale

    report = ConjugateReport(s1, [], s, Dn)
    for kind, a, b in cand:
        if kind == "sign":
            s2 = optimize.brentq(det_at, a, b, xtol=min(tol_conj, 1e-12), maxiter=200)
        else:
            r = optimize.minimize_scalar(lambda t: abs(det_at(t)), bounds=(a, b), method="bounded",
                                         options={"xatol": tol_conj})
            if r.fun > 1e-8:
                continue
            s2 = float(r.x)
        report.pairs.append(_pair_at(bundle, C, s1, s2, tol_conj))
    return report


def _pair_at(bundle, C, s1, s2, tol_conj):
    _, K, v, _ = _conj_matrix(bundle, C, s2)
    k = K.shape[0]
    A = np.vstack([K, v[None]]).T  # dim x (k + 1)
    u, sv, vt = np.linalg.svd(A)
    big = sv[0] if sv.size else 1.0
    ns = vt.shape[0] - int(np.sum(sv > 1e-6 * big))
    c = vt[-1]
    ck, cg = c[:k], c[k]
    # sum ck K_i(s2) + cg gdot(s2) = 0; adding (cg / (s2 - s1)) (s - s1) gdot
    # keeps the field zero at s1 and cancels the gdot part at s2
    coef = (C @ ck).copy()
    lam = cg / (s2 - s1)
    coef[-1] += lam
    coef[-2] += -lam * s1
    _, _, vals1, cov1 = bundle.at(s1)
    _, _, vals2, cov2 = bundle.at(s2)
    jp1 = coef @ cov1
    nrm = float(np.linalg.norm(jp1))
    coef /= nrm
    jp1 /= nrm
    jp2 = coef @ cov2
    Jall = np.tensordot(coef, bundle.values, axes=1)
    jmax = float(np.max(np.linalg.norm(Jall, axis=1)))
    res = max(float(np.linalg.norm(coef @ vals1)), float(np.linalg.norm(coef @ vals2))) / jmax
    return ConjugatePair(float(s1), float(s2), max(1, ns), jp1, jp2, coef, res)


# ----------------------------------------------------------------------
# canonical relation


@dataclass
class RelationData:
    zeta: np.ndarray
    alpha: np.ndarray
    tau_check: float
    xi: np.ndarray


def canonical_relation_data(bundle: JacobiBundle, s: float, xi) -> RelationData:
    """(zeta, alpha) with zeta_j = <xi, M_j(s)> and alpha_k = <xi, J_k(s)>.

    ``xi`` is a covector at gamma(s) in the metric's coordinates (a
    ``Covector`` or an array of length ``dim``).  It is first projected onto
    <xi, gamma-dot> = 0 along dt; for R x S^2 its spatial part is also
    projected onto the tangent plane of the sphere."""
    m = bundle.metric
    w = xi.as_array() if isinstance(xi, Covector) else np.asarray(xi, dtype=float).copy()
    if w.size != m.dim:
        raise ValueError(f"covector must have {m.dim} components")
    if not np.any(w):
        raise ValueError("zero covector")
    x, v, vals, _ = bundle.at(s)
    if isinstance(m, RxS2):
        y = x[1:]
        w[1:] = w[1:] - (w[1:] @ y) * y
    w[0] -= (w @ v) / v[0]
    n = m.n
    zeta = vals[:n] @ w
    alpha = vals[n:2 * n - 1] @ w
    return RelationData(zeta, alpha, float(w @ v), w)


def lightlike_statistic(bundle: JacobiBundle, rel: RelationData, scale_invariant: bool = True) -> float:
    """max(|alpha| / |zeta|, sine of the angle between zeta_* = h^{-1} zeta and theta).

    Both terms are homogeneous of degree zero in the covector; they vanish
    exactly for covectors proportional to gamma-dot lowered by g.  With
    ``scale_invariant=False`` the first term is |alpha| itself, which is only
    meaningful for normalized covectors."""
    rec = bundle.record
    m = rec.metric
    h = m.h_chart(rec.z, rec.t0)
    th = m.theta_chart(rec.z, rec.a, rec.t0)
    zs = np.linalg.solve(h, rel.zeta)
    nz = float(np.linalg.norm(rel.zeta))
    if nz == 0.0:
        return float("inf")
    if zs.size == 2:
        cross = abs(zs[0] * th[1] - zs[1] * th[0])
    else:
        cross = float(np.linalg.norm(np.cross(zs, th)))
    sine = cross / (np.linalg.norm(zs) * np.linalg.norm(th))
    first = float(np.linalg.norm(rel.alpha))
    return max(first / nz if scale_invariant else first, float(sine))


def conjugate_covectors(bundle: JacobiBundle, pair: ConjugatePair, lam: float = 0.0):
    """Relation data of g(J'(s_i) + lam gamma-dot(s_i)) at both ends of a
    conjugate pair, J being the field vanishing at s1 and s2.  The Wronskian
    of J with each chart field is constant, so the two results coincide."""
    m = bundle.metric
    out = []
    for s, jp in ((pair.s1, pair.jprime_s1), (pair.s2, pair.jprime_s2)):
        x, v, _, _ = bundle.at(s)
        out.append(canonical_relation_data(bundle, s, m.g(x) @ (jp + lam * v)))
    return out[0], out[1]


def minkowski_theta_hat(t: float, xi, theta) -> np.ndarray:
    """Flat-space fibre variable t (xi - (xi . theta) theta) of the ray chart."""
    xi = np.asarray(xi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    return t * (xi - (xi @ theta) * theta)


# ----------------------------------------------------------------------
# travel time


@dataclass
class TravelTimeReport:
    eps: np.ndarray
    arrival: np.ndarray
    arrival0: float
    difference_quotient: np.ndarray
    predicted: float
    errors: np.ndarray
    slope: float
    richardson: np.ndarray


def _shoot_to(metric, x1, t1, x2, nsteps, guess):
    """Null geodesic from (t1, x1) hitting x2; unknowns are the direction
    parameters and the parameter length.  Returns (arrival time, params)."""
    n = metric.n

    def end(p):
        a, L = p[:-1], p[-1]
        x0 = np.concatenate([[t1], x1])
        u = _direction(n, a)
        hm = metric.gprime(x0)
        v0 = np.concatenate([[1.0], u / math.sqrt(u @ hm @ u)])
        X, V, _ = _rk4_run(metric, x0, v0, L / nsteps, nsteps, stop_outside=False)
        return X[-1]

    sol = optimize.root(lambda p: end(p)[1:] - x2, guess, method="hybr", tol=1e-14)
    xe = end(sol.x)
    if not sol.success and np.max(np.abs(xe[1:] - x2)) > 1e-10:
        raise RuntimeError(f"boundary solve from {tuple(x1)} to {tuple(x2)} did not converge: "
                           f"{sol.message}")
    return float(xe[0]), sol.x


def travel_time_linearization_check(metric0: SemiGeodesic, h_fn: Callable, x1, x2, eps_list,
                                    t1: float = 0.0, nsteps: int = 512, dh_fn=None,
                                    d2h_fn=None) -> TravelTimeReport:
    """Arrival-time derivative versus half the integral of h(gdot, gdot).

    For each eps the null geodesic of -dt^2 + g'_0 + eps h from (t1, x1) to
    the spatial point x2 is found by shooting; the difference quotients
    (tau(eps) - tau(0)) / eps are compared with the prediction computed along
    the unperturbed geodesic by Simpson's rule."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    n = metric0.n
    d = x2 - x1
    L0 = float(np.linalg.norm(d))
    if n == 2:
        a0 = [math.atan2(d[1], d[0])]
    else:
        a0 = [math.acos(d[2] / L0), math.atan2(d[1], d[0])]
    guess = np.array(a0 + [L0])
    tau0, p0 = _shoot_to(metric0, x1, t1, x2, nsteps, guess)
    # prediction along the background geodesic
    x0 = np.concatenate([[t1], x1])
    u = _direction(n, p0[:-1])
    v0 = np.concatenate([[1.0], u / math.sqrt(u @ metric0.gprime(x0) @ u)])
    L = p0[-1]
    X, V, _ = _rk4_run(metric0, x0, v0, L / nsteps, nsteps, stop_outside=False)
    hv = h_fn(X)
    integrand = np.einsum("ki,kij,kj->k", V[:, 1:], hv, V[:, 1:])
    from scipy.integrate import simpson
    s = np.linspace(0.0, L, nsteps + 1)
    predicted = 0.5 * float(simpson(integrand, x=s))
    eps = np.asarray(eps_list, dtype=float)
    arr = np.empty(eps.size)
    for i, e in enumerate(eps):
        me = metric0.perturbed(h_fn, float(e), dh_fn, d2h_fn)
        arr[i], _ = _shoot_to(me, x1, t1, x2, nsteps, p0)
    dq = (arr - tau0) / eps
    err = np.abs(dq - predicted)
    ok = err > 0
    slope = float(np.polyfit(np.log(eps[ok]), np.log(err[ok]), 1)[0]) if ok.sum() >= 2 else float("nan")
    # Richardson on successive halvings: 2 D(e/2) - D(e)
    rich = np.array([2 * dq[i + 1] - dq[i] for i in range(eps.size - 1)
                     if abs(eps[i] / eps[i + 1] - 2.0) < 1e-12])
    return TravelTimeReport(eps, arr, tau0, dq, predicted, err, slope, rich)
