"""Analytic phantoms with closed-form evaluators."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .geometry import ScalarField, SpacetimeGrid, warn_support

__all__ = [
    "Phantom",
    "Zero",
    "Gaussian",
    "PlaneWavePacket",
    "BandlimitedRandom",
    "RidgeOnSphere",
    "AntipodalPartner",
    "TimeProfile",
    "Sum",
    "sample_phantom",
    "odd_profile",
]


class Phantom:
    """Base class.  ``evaluate(t, x)`` takes t of shape S and x of shape S + (d,)."""

    kind = "phantom"

    def evaluate(self, t, x) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, t, x):
        return self.evaluate(t, x)

    def spec(self) -> dict:
        """JSON-friendly description, used in file provenance."""
        return {"kind": self.kind}


@dataclass(frozen=True)
class Zero(Phantom):
    kind = "zero"

    def evaluate(self, t, x):
        return np.zeros(np.shape(t))


@dataclass(frozen=True)
class Gaussian(Phantom):
    """amplitude * exp(-sum(((y - center) / widths)^2)) with y = (t, x)."""

    center: tuple
    widths: tuple = (1.0,)
    amplitude: float = 1.0
    kind = "gaussian"

    def __post_init__(self):
        c = tuple(float(v) for v in np.ravel(self.center))
        w = np.broadcast_to(np.asarray(self.widths, dtype=float), (len(c),))
        if np.any(w <= 0):
            raise ValueError("widths must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "widths", tuple(float(v) for v in w))

    @classmethod
    def centered(cls, n: int, width: float = 1.0, amplitude: float = 1.0) -> "Gaussian":
        return cls((0.0,) * (n + 1), (width,), amplitude)

    @property
    def n(self) -> int:
        return len(self.center) - 1

    def evaluate(self, t, x):
        c, w = self.center, self.widths
        q = ((np.asarray(t) - c[0]) / w[0]) ** 2
        x = np.asarray(x)
        for i in range(self.n):
            q = q + ((x[..., i] - c[i + 1]) / w[i + 1]) ** 2
        return self.amplitude * np.exp(-q)

    def fourier(self, tau, xi) -> np.ndarray:
        """Closed form of int exp(-i (t tau + x.xi)) f dt dx."""
        c, w = self.center, self.widths
        om = [np.asarray(tau, dtype=float)] + [np.asarray(xi)[..., i] for i in range(self.n)]
        mag = self.amplitude * np.prod([math.sqrt(math.pi) * wi for wi in w])
        q = sum((wi * o) ** 2 for wi, o in zip(w, om)) / 4.0
        ph = sum(ci * o for ci, o in zip(c, om))
        return mag * np.exp(-q - 1j * ph)

    def spec(self):
        return {"kind": self.kind, "center": list(self.center), "widths": list(self.widths),
                "amplitude": self.amplitude}


def odd_profile(u):
    """u exp(-u^2): smooth, rapidly decaying, zero mean."""
    u = np.asarray(u, dtype=float)
    return u * np.exp(-u * u)


@dataclass(frozen=True)
class PlaneWavePacket(Phantom):
    """f(t, x) = h(t + x.a).  With |a| < 1 and int h = 0 every light ray
    integral vanishes."""

    a: tuple
    profile: Callable = odd_profile
    profile_name: str = "u*exp(-u^2)"
    kind = "planewave"

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(v) for v in np.ravel(self.a)))

    @property
    def n(self) -> int:
        return len(self.a)

    def check_kernel_conditions(self, tol: float = 1e-10):
        if not np.linalg.norm(self.a) < 1.0:
            raise ValueError("kernel construction needs |a| < 1")
        from scipy.integrate import quad
        m, _ = quad(lambda u: float(self.profile(np.array(u))), -np.inf, np.inf)
        if abs(m) > tol:
            raise ValueError(f"profile has nonzero mean {m:.3e}")

    def evaluate(self, t, x):
        u = np.asarray(t, dtype=float) + np.asarray(x) @ np.asarray(self.a)
        return self.profile(u)

    def spec(self):
        return {"kind": self.kind, "a": list(self.a), "profile": self.profile_name}


@dataclass(frozen=True)
class BandlimitedRandom(Phantom):
    """Sum of Gaussian-windowed cosine packets with random centres.

    Packet k is amp_k exp(-|y - c_k|^2 / (2 width^2)) cos(w_k.(y - c_k) + p_k)
    with y = (t, x).  In the default (spacelike) variant the centre
    frequencies w_k = (tau_k, xi_k) satisfy |tau_k| <= cone_fraction |xi_k| / 4,
    so the spectrum sits well inside {|tau| <= cone_fraction |xi|}; the leakage
    is governed by the Gaussian tail exp(-(width * distance)^2).  With
    ``timelike=True`` the packets oscillate in t only (xi_k = 0), placing the
    spectrum around the t-axis inside the timelike cone.
    """

    n: int
    seed: int = 0
    cone_fraction: float = 0.8
    timelike: bool = False
    n_packets: int = 6
    wavenumber: float = 2.0
    width: float = 2.25
    spread: float = 1.5
    kind = "bandlimited"
    _table: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        if self.n not in (2, 3):
            raise ValueError("spatial dimension must be 2 or 3")
        if not 0.0 < self.cone_fraction <= 1.0:
            raise ValueError("cone_fraction must lie in (0, 1]")
        rng = np.random.default_rng(self.seed)
        d = self.n + 1
        cen = rng.uniform(-self.spread, self.spread, size=(self.n_packets, d))
        amp = rng.uniform(0.5, 1.0, size=self.n_packets)
        pha = rng.uniform(0.0, 2 * np.pi, size=self.n_packets)
        kmag = self.wavenumber * rng.uniform(0.85, 1.15, size=self.n_packets)
        freq = np.zeros((self.n_packets, d))
        for k in range(self.n_packets):
            if self.timelike:
                freq[k, 0] = kmag[k] * rng.choice([-1.0, 1.0])
            else:
                u = rng.normal(size=self.n)
                u /= np.linalg.norm(u)
                freq[k, 1:] = kmag[k] * u
                freq[k, 0] = rng.uniform(-1.0, 1.0) * self.cone_fraction * kmag[k] / 4.0
        object.__setattr__(self, "_table", (cen, amp, pha, freq))

    @property
    def centers(self):
        return self._table[0]

    @property
    def frequencies(self):
        return self._table[3]

    def evaluate(self, t, x):
        cen, amp, pha, freq = self._table
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        out = np.zeros(np.broadcast_shapes(t.shape, x.shape[:-1]))
        s2 = 2.0 * self.width**2
        for k in range(self.n_packets):
            dt = t - cen[k, 0]
            r2 = dt * dt
            ph = freq[k, 0] * dt + pha[k]
            for i in range(self.n):
                dxi = x[..., i] - cen[k, i + 1]
                r2 = r2 + dxi * dxi
                ph = ph + freq[k, i + 1] * dxi
            out += amp[k] * np.exp(-r2 / s2) * np.cos(ph)
        return out

    def spec(self):
        return {"kind": self.kind, "n": self.n, "seed": self.seed,
                "cone_fraction": self.cone_fraction, "timelike": self.timelike,
                "n_packets": self.n_packets, "wavenumber": self.wavenumber,
                "width": self.width, "spread": self.spread}


def _sphere_distance(y, y0):
    # 2 asin(|y - y0| / 2) is accurate for small separations where acos is not
    chord = np.linalg.norm(np.asarray(y) - np.asarray(y0), axis=-1)
    return 2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))


@dataclass(frozen=True)
class RidgeOnSphere(Phantom):
    """Bump on R x S^2: Gaussian in geodesic distance to ``center`` times a
    Gaussian in t around ``t_center``.  Points y are unit vectors in R^3."""

    t_center: float = 0.0
    center: tuple = (0.0, 0.0, 1.0)
    width: float = 0.05
    time_width: Optional[float] = None
    amplitude: float = 1.0
    kind = "ridge"

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        if c.shape != (3,) or np.linalg.norm(c) == 0:
            raise ValueError("center must be a nonzero 3-vector")
        object.__setattr__(self, "center", tuple(c / np.linalg.norm(c)))
        if self.width <= 0:
            raise ValueError("width must be positive")
        if self.time_width is None:
            object.__setattr__(self, "time_width", float(self.width))

    def evaluate(self, t, y):
        d = _sphere_distance(y, self.center)
        tt = (np.asarray(t, dtype=float) - self.t_center) / self.time_width
        return self.amplitude * np.exp(-0.5 * (d / self.width) ** 2 - 0.5 * tt * tt)

    def spec(self):
        return {"kind": self.kind, "t_center": self.t_center, "center": list(self.center),
                "width": self.width, "time_width": self.time_width,
                "amplitude": self.amplitude}


@dataclass(frozen=True)
class AntipodalPartner(Phantom):
    """f2(t, y) = -f1(t - shift, -y)."""

    base: Phantom
    shift: float = math.pi
    kind = "antipodal"

    def evaluate(self, t, y):
        return -self.base.evaluate(np.asarray(t, dtype=float) - self.shift, -np.asarray(y))

    def spec(self):
        return {"kind": self.kind, "shift": self.shift, "base": self.base.spec()}


@dataclass(frozen=True)
class TimeProfile(Phantom):
    """f(t, x) = profile(t), independent of the spatial point."""

    profile: Callable
    kind = "time-profile"

    def evaluate(self, t, x):
        return np.asarray(self.profile(np.asarray(t, dtype=float)), dtype=float)


@dataclass(frozen=True)
class Sum(Phantom):
    parts: tuple
    kind = "sum"

    def evaluate(self, t, x):
        return sum(p.evaluate(t, x) for p in self.parts)

    def spec(self):
        return {"kind": self.kind, "parts": [p.spec() for p in self.parts]}


def sample_phantom(p: Phantom, g: SpacetimeGrid, label: Optional[str] = None,
                   check_support: bool = True) -> ScalarField:
    """Evaluate a phantom at every node of ``g``."""
    t, x = g.points()
    v = np.asarray(p.evaluate(t, x), dtype=float)
    if check_support:
        warn_support(v, f"phantom {p.kind}")
    return ScalarField(g, v, label or f"sampled {p.kind}")
