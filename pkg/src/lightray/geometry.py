"""Shared domain types: spacetime grids, sampled fields, ray charts, sinograms,
covectors and weights.

Array conventions
-----------------
A field on a ``SpacetimeGrid`` is stored as an array of shape
``(nt, nx, ..., nx)`` with axis 0 the time axis.  A sinogram on a ``RayChart``
is stored with shape ``(nz, ..., nz, ndir)``: the first ``n`` axes index the
z-grid and the last axis indexes the direction list.  Both are serialized with
the first axis varying fastest (Fortran order), so time is the fastest index in
a field file and ``z_1`` the fastest index in a sinogram file.
"""
from __future__ import annotations

import enum
import math
import sys
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "SpacetimeGrid",
    "ScalarField",
    "RayChart",
    "Sinogram",
    "Causal",
    "Covector",
    "Weight",
    "classify",
    "sphere_area",
    "TOL_CONE",
]

TOL_CONE = 1e-12

# bytes allowed for one float64 array on the grid
_MAX_BYTES = min(sys.maxsize, 2**40)


def sphere_area(k: int) -> float:
    """Area of the unit sphere S^k embedded in R^{k+1} (|S^0| = 2)."""
    return 2.0 * math.pi ** ((k + 1) / 2.0) / math.gamma((k + 1) / 2.0)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SpacetimeGrid:
    """Uniform grid on [-T, T] x [-R, R]^n, endpoints included."""

    n: int
    t_extent: float
    x_extent: float
    nt: int
    nx: int

    def __post_init__(self):
        if self.n not in (2, 3):
            raise ValueError(f"spatial dimension must be 2 or 3, got {self.n}")
        if self.nt < 2 or self.nx < 2:
            raise ValueError("need at least two samples per axis")
        if not (self.t_extent > 0 and self.x_extent > 0):
            raise ValueError("extents must be positive")
        if not (math.isfinite(self.t_extent) and math.isfinite(self.x_extent)):
            raise ValueError("extents must be finite")
        npts = self.nt * self.nx**self.n
        if npts * 8 > _MAX_BYTES:
            raise MemoryError(f"grid with {npts} points does not fit in addressable memory")

    @property
    def dt(self) -> float:
        return 2.0 * self.t_extent / (self.nt - 1)

    @property
    def dx(self) -> float:
        return 2.0 * self.x_extent / (self.nx - 1)

    @property
    def shape(self) -> tuple:
        return (self.nt,) + (self.nx,) * self.n

    @property
    def size(self) -> int:
        return self.nt * self.nx**self.n

    @property
    def cell_volume(self) -> float:
        return self.dt * self.dx**self.n

    def t_axis(self) -> np.ndarray:
        return -self.t_extent + self.dt * np.arange(self.nt)

    def x_axis(self) -> np.ndarray:
        return -self.x_extent + self.dx * np.arange(self.nx)

    def axes(self) -> list:
        return [self.t_axis()] + [self.x_axis()] * self.n

    def mesh(self, sparse: bool = True):
        """Coordinate arrays (t, x_1, ..., x_n) broadcastable to ``shape``."""
        return np.meshgrid(*self.axes(), indexing="ij", sparse=sparse)

    def points(self):
        """Return (t, x) with t of shape ``shape`` and x of shape ``shape + (n,)``."""
        m = self.mesh(sparse=False)
        return m[0], np.stack(m[1:], axis=-1)

    def zeros(self, label: str = "zero") -> "ScalarField":
        return ScalarField(self, np.zeros(self.shape), label)


@dataclass(frozen=True)
class ScalarField:
    grid: SpacetimeGrid
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.size != self.grid.size:
            raise ValueError(f"field has {v.size} values, grid has {self.grid.size} points")
        v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", _frozen(v))

    def inner(self, other: "ScalarField") -> float:
        """Grid pairing sum(f g) dt dx^n."""
        _check_same_grid(self.grid, other.grid)
        return float(np.vdot(self.values, other.values)) * self.grid.cell_volume

    def norm(self) -> float:
        return math.sqrt(max(self.inner(self), 0.0))

    def with_values(self, values, label: Optional[str] = None) -> "ScalarField":
        return ScalarField(self.grid, values, self.label if label is None else label)


def _check_same_grid(a: SpacetimeGrid, b: SpacetimeGrid):
    if a != b:
        raise ValueError(f"grid mismatch: {a} vs {b}")


@dataclass(frozen=True)
class RayChart:
    """Rays (s, z + s theta) with z on a uniform grid and theta on a sphere rule.

    ``directions`` has shape (ndir, n) and ``weights`` shape (ndir,).  The
    construction parameters are kept in ``rule`` so a chart can be rebuilt
    from a file header.
    """

    n: int
    z_extent: float
    nz: int
    directions: np.ndarray
    weights: np.ndarray
    rule: tuple = field(default=())

    def __post_init__(self):
        d = np.asarray(self.directions, dtype=np.float64)
        w = np.asarray(self.weights, dtype=np.float64)
        if self.n not in (2, 3):
            raise ValueError("spatial dimension must be 2 or 3")
        if d.ndim != 2 or d.shape[1] != self.n or d.shape[0] == 0:
            raise ValueError("directions must be a non-empty (ndir, n) array")
        if w.shape != (d.shape[0],):
            raise ValueError("one weight per direction")
        if self.nz < 2 or not self.z_extent > 0:
            raise ValueError("z-grid needs nz >= 2 and positive extent")
        if np.max(np.abs(np.linalg.norm(d, axis=1) - 1.0)) > 1e-14:
            raise ValueError("directions must be unit vectors")
        object.__setattr__(self, "directions", _frozen(d))
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def circle(cls, z_extent: float, nz: int, ndir: int) -> "RayChart":
        """n = 2: equally spaced angles 2 pi k / ndir, weight 2 pi / ndir."""
        if ndir < 1:
            raise ValueError("empty direction set")
        ang = 2.0 * np.pi * np.arange(ndir) / ndir
        d = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        d /= np.linalg.norm(d, axis=1)[:, None]
        w = np.full(ndir, 2.0 * np.pi / ndir)
        return cls(2, float(z_extent), int(nz), d, w, ("circle", int(ndir)))

    @classmethod
    def sphere(cls, z_extent: float, nz: int, npolar: int, nazimuth: int) -> "RayChart":
        """n = 3: Gauss-Legendre in cos(polar angle) times a uniform azimuth rule."""
        if npolar < 1 or nazimuth < 1:
            raise ValueError("empty direction set")
        c, wc = np.polynomial.legendre.leggauss(npolar)
        phi = 2.0 * np.pi * np.arange(nazimuth) / nazimuth
        C, P = np.meshgrid(c, phi, indexing="ij")
        S = np.sqrt(1.0 - C**2)
        d = np.stack([S * np.cos(P), S * np.sin(P), C], axis=-1).reshape(-1, 3)
        d /= np.linalg.norm(d, axis=1)[:, None]
        w = np.repeat(wc * (2.0 * np.pi / nazimuth), nazimuth)
        return cls(3, float(z_extent), int(nz), d, w, ("sphere", int(npolar), int(nazimuth)))

    @classmethod
    def build(cls, n: int, z_extent: float, nz: int, ndir) -> "RayChart":
        """Convenience constructor: ``ndir`` is an int for n=2 and either an
        int (total, split as npolar x 2 npolar) or a pair for n=3."""
        if n == 2:
            return cls.circle(z_extent, nz, int(ndir))
        if n == 3:
            if np.ndim(ndir) == 0:
                npol = max(1, int(round(math.sqrt(int(ndir) / 2.0))))
                return cls.sphere(z_extent, nz, npol, 2 * npol)
            return cls.sphere(z_extent, nz, int(ndir[0]), int(ndir[1]))
        raise ValueError("spatial dimension must be 2 or 3")

    @classmethod
    def from_rule(cls, n: int, z_extent: float, nz: int, rule) -> "RayChart":
        rule = tuple(rule)
        if rule and rule[0] == "circle" and n == 2:
            return cls.circle(z_extent, nz, rule[1])
        if rule and rule[0] == "sphere" and n == 3:
            return cls.sphere(z_extent, nz, rule[1], rule[2])
        raise ValueError(f"unknown direction rule {rule!r} for n={n}")

    @property
    def ndir(self) -> int:
        return self.directions.shape[0]

    @property
    def dz(self) -> float:
        return 2.0 * self.z_extent / (self.nz - 1)

    @property
    def shape(self) -> tuple:
        return (self.nz,) * self.n + (self.ndir,)

    def z_axis(self) -> np.ndarray:
        return -self.z_extent + self.dz * np.arange(self.nz)

    def z_points(self) -> np.ndarray:
        """All z-grid points, shape (nz^n, n), C order over the z axes."""
        ax = self.z_axis()
        m = np.meshgrid(*([ax] * self.n), indexing="ij")
        return np.stack([a.ravel() for a in m], axis=1)

    def same_as(self, other: "RayChart") -> bool:
        return (
            self.n == other.n
            and self.nz == other.nz
            and self.z_extent == other.z_extent
            and np.array_equal(self.directions, other.directions)
            and np.array_equal(self.weights, other.weights)
        )


@dataclass(frozen=True)
class Sinogram:
    chart: RayChart
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.size != int(np.prod(self.chart.shape)):
            raise ValueError(f"sinogram has {v.size} values, chart expects {self.chart.shape}")
        v = v.reshape(self.chart.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("sinogram values must be finite")
        object.__setattr__(self, "values", _frozen(v))

    def inner(self, other: "Sinogram") -> float:
        """Ray-space pairing sum_z sum_theta a b w_theta dz^n."""
        if not self.chart.same_as(other.chart):
            raise ValueError("chart mismatch")
        c = self.chart
        return float(np.sum(self.values * other.values * c.weights)) * c.dz**c.n

    def norm(self) -> float:
        return math.sqrt(max(self.inner(self), 0.0))

    def with_values(self, values, label: Optional[str] = None) -> "Sinogram":
        return Sinogram(self.chart, values, self.label if label is None else label)


class Causal(enum.Enum):
    SPACELIKE = "spacelike"
    LIGHTLIKE = "lightlike"
    TIMELIKE = "timelike"


@dataclass(frozen=True)
class Covector:
    tau: float
    xi: tuple
    base: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "xi", tuple(float(v) for v in np.ravel(self.xi)))
        object.__setattr__(self, "tau", float(self.tau))
        if self.base is not None:
            object.__setattr__(self, "base", tuple(float(v) for v in np.ravel(self.base)))

    def as_array(self) -> np.ndarray:
        return np.array((self.tau,) + self.xi)


def classify(c: Covector, metric=None, tol: float = TOL_CONE) -> Causal:
    """Causal type of a covector from the sign of g^{-1}(c, c).

    Without a metric the Minkowski form -tau^2 + |xi|^2 is used.  The lightlike
    test is relative: |g^{-1}(c,c)| <= tol * sum |g^{ab} c_a c_b|.
    """
    w = c.as_array()
    if not np.any(w):
        raise ValueError("cannot classify the zero covector")
    if metric is None:
        terms = np.concatenate([[-w[0] ** 2], w[1:] ** 2])
    else:
        if c.base is None:
            raise ValueError("a base point is required with a metric")
        ginv = metric.g_inv(np.asarray(c.base, dtype=float))
        if ginv.shape[0] != w.size:
            raise ValueError("covector length does not match the metric dimension")
        terms = (ginv * np.outer(w, w)).ravel()
    q = float(np.sum(terms))
    scale = float(np.sum(np.abs(terms)))
    if abs(q) <= tol * scale:
        return Causal.LIGHTLIKE
    return Causal.SPACELIKE if q > 0 else Causal.TIMELIKE


@dataclass(frozen=True)
class Weight:
    """Ray weight kappa(t, x, theta).

    ``evaluator(t, x, theta)`` receives arrays t (m,), x (m, n), theta (m, n)
    with unit rows and returns (m,) values.
    """

    evaluator: Callable
    nowhere_vanishing: bool = True
    is_unit: bool = False

    @classmethod
    def unit(cls) -> "Weight":
        return cls(lambda t, x, th: np.ones(np.shape(t)), True, True)

    def __call__(self, t, x, theta) -> np.ndarray:
        return np.asarray(self.evaluator(t, x, theta), dtype=np.float64)


def resolve_weight(kappa: Optional[Weight]) -> Weight:
    return Weight.unit() if kappa is None else kappa


def warn_support(values: np.ndarray, what: str, rel: float = 1e-6):
    """Warn when a sampled function is not small on the boundary of its box."""
    vmax = float(np.max(np.abs(values))) if values.size else 0.0
    if vmax == 0.0:
        return
    edge = 0.0
    for ax in range(values.ndim):
        for idx in (0, -1):
            edge = max(edge, float(np.max(np.abs(np.take(values, idx, axis=ax)))))
    if edge > rel * vmax:
        warnings.warn(f"{what}: boundary values reach {edge / vmax:.2e} of the peak; "
                      "support does not fit inside the grid", stacklevel=3)
