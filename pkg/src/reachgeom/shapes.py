"""Catalog of closed test sets with exact boundary structure.

Every shape knows three things about itself:

* pointwise membership (vectorized, with a boundary tolerance),
* a stratified description of its boundary: for each stratum dimension m,
  quadrature points carrying H^m weights plus a *fiber* describing the set of
  outward Euclidean unit normals at that point (a single vector on smooth
  pieces, an antipodal pair on 1-codimensional sheets, an arc or spherical
  patch at corners and edges),
* parametric charts of the boundary used by the generic nearest-point solver.

Strata weights are exact for polytopes (face measures split evenly across
nodes) and spectrally accurate chart quadrature on smooth pieces.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .norms import EllipsoidalNorm, EuclideanNorm, Norm

__all__ = [
    "Fiber",
    "FiberVector",
    "FiberPair",
    "FiberArc",
    "FiberEdgeArc",
    "FiberPatch",
    "Stratum",
    "Chart",
    "Shape",
    "Ball",
    "Ellipsoid",
    "WulffBody",
    "ConvexPolytope",
    "CapLens",
    "SegmentUnion",
    "DisjointUnion",
    "ComplementShape",
    "EmptyInteriorError",
    "spherical_polygon_area",
    "make_catalog_shape",
]

MEMBERSHIP_TOL = 1e-9


class EmptyInteriorError(ValueError):
    """Complement view requested for a set with no interior."""


# ======================================================================
# normal fibers
# ======================================================================


class Fiber:
    """Set of outward Euclidean unit normals at a boundary point."""

    dim_fiber: int = 0

    def nodes(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Quadrature (normals, weights) for the spherical measure on the fiber."""
        raise NotImplementedError

    def measure(self) -> float:
        """Total spherical H^{dim_fiber} measure (counting measure if 0-dim)."""
        u, w = self.nodes(1)
        return float(w.sum())


@dataclass(frozen=True)
class FiberVector(Fiber):
    u: np.ndarray

    dim_fiber = 0

    def nodes(self, k: int):
        return np.asarray(self.u, dtype=float)[None, :], np.array([1.0])


@dataclass(frozen=True)
class FiberPair(Fiber):
    """Antipodal pair {+u, -u}: two sheets of the normal bundle."""

    u: np.ndarray

    dim_fiber = 0

    def nodes(self, k: int):
        u = np.asarray(self.u, dtype=float)
        return np.stack([u, -u]), np.array([1.0, 1.0])


@dataclass(frozen=True)
class FiberArc(Fiber):
    """d=2 corner fan: normals (cos t, sin t) for t in [theta0, theta1]."""

    theta0: float
    theta1: float

    dim_fiber = 1

    def nodes(self, k: int):
        k = max(int(k), 1)
        x, w = np.polynomial.legendre.leggauss(k)
        mid, half = 0.5 * (self.theta0 + self.theta1), 0.5 * (self.theta1 - self.theta0)
        t = mid + half * x
        return np.c_[np.cos(t), np.sin(t)], w * half

    def tangents(self, k: int) -> np.ndarray:
        """Unit tangents du/dt at the quadrature nodes."""
        k = max(int(k), 1)
        x, _ = np.polynomial.legendre.leggauss(k)
        mid, half = 0.5 * (self.theta0 + self.theta1), 0.5 * (self.theta1 - self.theta0)
        t = mid + half * x
        return np.c_[-np.sin(t), np.cos(t)]


@dataclass(frozen=True)
class FiberEdgeArc(Fiber):
    """d=3 edge fan: normals rotating between two adjacent facet normals."""

    n0: np.ndarray
    n1: np.ndarray

    dim_fiber = 1

    def _frame(self):
        e0 = np.asarray(self.n0, dtype=float)
        n1 = np.asarray(self.n1, dtype=float)
        angle = float(np.arccos(np.clip(e0 @ n1, -1.0, 1.0)))
        e1 = n1 - (e0 @ n1) * e0
        e1 /= np.linalg.norm(e1)
        return e0, e1, angle

    def nodes(self, k: int):
        e0, e1, angle = self._frame()
        k = max(int(k), 1)
        x, w = np.polynomial.legendre.leggauss(k)
        t = 0.5 * angle * (x + 1.0)
        return np.outer(np.cos(t), e0) + np.outer(np.sin(t), e1), w * 0.5 * angle

    def tangents(self, k: int) -> np.ndarray:
        """Unit tangents du/dt at the quadrature nodes."""
        e0, e1, angle = self._frame()
        k = max(int(k), 1)
        x, _ = np.polynomial.legendre.leggauss(k)
        t = 0.5 * angle * (x + 1.0)
        return np.outer(-np.sin(t), e0) + np.outer(np.cos(t), e1)

    def measure(self):
        return self._frame()[2]


def spherical_polygon_area(vertices: np.ndarray) -> float:
    """Area of a convex spherical polygon given ordered unit vertices (exact)."""
    v = np.asarray(vertices, dtype=float)
    total = 0.0
    for i in range(1, len(v) - 1):
        a, b, c = v[0], v[i], v[i + 1]
        num = abs(np.dot(a, np.cross(b, c)))
        den = 1.0 + a @ b + b @ c + c @ a
        total += 2.0 * np.arctan2(num, den)
    return total


@dataclass(frozen=True)
class FiberPatch(Fiber):
    """d=3 vertex fan: convex spherical polygon of normals (ordered vertices)."""

    generators: np.ndarray  # (k, 3) ordered unit vectors

    dim_fiber = 2

    def nodes(self, k: int):
        # Fan-triangulate, then refine each spherical triangle `level` times;
        # sub-triangle areas are exact, nodes sit at normalized centroids.
        gens = np.asarray(self.generators, dtype=float)
        level = max(int(np.ceil(np.log2(max(k, 1)) / 2)), 1)
        tris = []
        for i in range(1, len(gens) - 1):
            tris.append((gens[0], gens[i], gens[i + 1]))
        for _ in range(level):
            new = []
            for a, b, c in tris:
                ab = a + b
                ab /= np.linalg.norm(ab)
                bc = b + c
                bc /= np.linalg.norm(bc)
                ca = c + a
                ca /= np.linalg.norm(ca)
                new += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
            tris = new
        pts = np.empty((len(tris), 3))
        wts = np.empty(len(tris))
        for j, (a, b, c) in enumerate(tris):
            ctr = a + b + c
            pts[j] = ctr / np.linalg.norm(ctr)
            wts[j] = spherical_polygon_area(np.stack([a, b, c]))
        return pts, wts

    def measure(self):
        return spherical_polygon_area(self.generators)


# ======================================================================
# strata and charts
# ======================================================================


@dataclass
class Stratum:
    """Quadrature sample of one boundary stratum.

    ``index`` is the stratum dimension m; ``weights`` approximate H^m on the
    stratum; ``fibers[i]`` describes the normal set at ``points[i]``.
    """

    index: int
    points: np.ndarray
    weights: np.ndarray
    fibers: list

    def __len__(self):
        return len(self.points)


class Chart:
    """Parametric boundary piece used by the generic nearest-point solver."""

    param_dim: int = 1
    periodic: bool = False

    def __init__(self, bounds):
        self.bounds = np.asarray(bounds, dtype=float)  # (param_dim, 2)

    def point(self, t) -> np.ndarray:
        raise NotImplementedError

    def dpoint(self, t) -> np.ndarray:
        """First derivative; (N,) -> (N, d) for 1d charts, FD fallback."""
        t = np.asarray(t, dtype=float)
        h = 1e-7
        return (self.point(t + h) - self.point(t - h)) / (2 * h)

    def normal(self, t) -> np.ndarray:
        raise NotImplementedError

    def seeds(self, k: int) -> np.ndarray:
        lo, hi = self.bounds[0]
        if self.periodic:
            return np.linspace(lo, hi, k, endpoint=False)
        return np.linspace(lo, hi, k)

    def clamp(self, t):
        lo, hi = self.bounds[0]
        t = np.asarray(t, dtype=float)
        if self.periodic:
            return lo + np.mod(t - lo, hi - lo)
        return np.clip(t, lo, hi)


class _FuncChart(Chart):
    """1d chart from callables (all vectorized over t)."""

    def __init__(self, bounds, point_fn, dpoint_fn, normal_fn, periodic=False):
        super().__init__(np.atleast_2d(bounds))
        self._p, self._dp, self._n = point_fn, dpoint_fn, normal_fn
        self.periodic = periodic

    def point(self, t):
        return self._p(np.asarray(t, dtype=float))

    def dpoint(self, t):
        if self._dp is None:
            return super().dpoint(t)
        return self._dp(np.asarray(t, dtype=float))

    def normal(self, t):
        return self._n(np.asarray(t, dtype=float))


class SphereChart(Chart):
    """d=3 chart over the unit sphere via (polar, azimuth) angles.

    ``embed(u)`` maps unit vectors to boundary points; the chart composes it
    with standard spherical coordinates.
    """

    param_dim = 2

    def __init__(self, embed: Callable, normal_of: Callable):
        super().__init__(np.array([[1e-6, np.pi - 1e-6], [0.0, 2 * np.pi]]))
        self.embed = embed
        self.normal_of = normal_of

    @staticmethod
    def to_unit(t):
        t = np.atleast_2d(np.asarray(t, dtype=float))
        th, ph = t[..., 0], t[..., 1]
        s = np.sin(th)
        return np.stack([s * np.cos(ph), s * np.sin(ph), np.cos(th)], axis=-1)

    def point(self, t):
        return self.embed(self.to_unit(t))

    def normal(self, t):
        return self.normal_of(self.to_unit(t))

    def seeds(self, k):
        # Fibonacci lattice pulled back to (theta, phi)
        u = fibonacci_sphere(max(k, 8))
        th = np.arccos(np.clip(u[:, 2], -1, 1))
        ph = np.mod(np.arctan2(u[:, 1], u[:, 0]), 2 * np.pi)
        return np.c_[th, ph]

    def clamp(self, t):
        t = np.atleast_2d(np.asarray(t, dtype=float))
        th = np.clip(t[..., 0], *self.bounds[0])
        ph = np.mod(t[..., 1], 2 * np.pi)
        return np.stack([th, ph], axis=-1)


class _PlanarChart(Chart):
    """d=3 flat rectangular facet: origin + t0 e0 + t1 e1."""

    param_dim = 2

    def __init__(self, origin, e0, e1, extents, normal):
        super().__init__(np.array([[0.0, extents[0]], [0.0, extents[1]]]))
        self.origin = np.asarray(origin, dtype=float)
        self.e0 = np.asarray(e0, dtype=float)
        self.e1 = np.asarray(e1, dtype=float)
        self._normal = np.asarray(normal, dtype=float)

    def point(self, t):
        t = np.atleast_2d(np.asarray(t, dtype=float))
        return self.origin + t[..., :1] * self.e0 + t[..., 1:2] * self.e1

    def normal(self, t):
        t = np.atleast_2d(np.asarray(t, dtype=float))
        return np.broadcast_to(self._normal, t.shape[:-1] + (3,)).copy()

    def seeds(self, k):
        g = max(int(np.sqrt(k)), 2)
        s0 = np.linspace(0.0, self.bounds[0, 1], g)
        s1 = np.linspace(0.0, self.bounds[1, 1], g)
        A, B = np.meshgrid(s0, s1, indexing="ij")
        return np.c_[A.ravel(), B.ravel()]

    def clamp(self, t):
        t = np.atleast_2d(np.asarray(t, dtype=float))
        a = np.clip(t[..., 0], *self.bounds[0])
        b = np.clip(t[..., 1], *self.bounds[1])
        return np.stack([a, b], axis=-1)


def fibonacci_sphere(n: int) -> np.ndarray:
    k = np.arange(n)
    ga = np.pi * (3.0 - np.sqrt(5.0))
    z = 1.0 - 2.0 * (k + 0.5) / n
    r = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    return np.c_[r * np.cos(ga * k), r * np.sin(ga * k), z]


# ======================================================================
# shape base
# ======================================================================


class Shape:
    dim: int
    name: str = "shape"
    is_convex: bool = False

    # -------- membership ------------------------------------------------
    def contains(self, x, tol: float = MEMBERSHIP_TOL) -> np.ndarray:
        """True where x lies in the closed set (boundary included)."""
        raise NotImplementedError

    # -------- metrics ---------------------------------------------------
    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    @property
    def diameter(self) -> float:
        lo, hi = self.bounding_box()
        return float(np.linalg.norm(hi - lo))

    def volume(self) -> Optional[float]:
        """Lebesgue measure when known analytically, else None."""
        return None

    # -------- boundary structure ----------------------------------------
    def boundary_strata(self, n: int = 512, seed: int = 0) -> list[Stratum]:
        raise NotImplementedError

    def boundary_cloud(self, k: int = 2048) -> tuple[np.ndarray, np.ndarray]:
        """Dense (points, H^n weights) over the top boundary stratum."""
        strata = self.boundary_strata(n=k, seed=0)
        top = [s for s in strata if s.index == self.dim - 1]
        pts = np.concatenate([s.points for s in top])
        wts = np.concatenate([s.weights for s in top])
        return pts, wts

    def charts(self) -> list[Chart]:
        raise NotImplementedError

    def corner_points(self) -> np.ndarray:
        """0-dimensional boundary features (candidate feet for projections)."""
        return np.empty((0, self.dim))

    def boundary_fiber_at(self, a, tol: float = 1e-7) -> Fiber:
        """Exact normal fiber at a boundary point of a catalog primitive."""
        raise NotImplementedError

    # -------- fast paths --------------------------------------------------
    def exact_projection(self, norm: Norm, x) -> Optional[tuple[np.ndarray, np.ndarray]]:
        """(feet, deltas) under `norm` when a closed form exists, else None.

        Exterior points only; callers mask interior points themselves.
        """
        return None

    def exact_distance(self, norm: Norm, x) -> Optional[np.ndarray]:
        res = self.exact_projection(norm, x)
        return None if res is None else res[1]

    def complement(self) -> "Shape":
        raise EmptyInteriorError(f"{self.name} has no complement view")

    def __repr__(self):  # pragma: no cover - cosmetic
        return f"{type(self).__name__}({self.name})"


def _smooth_strata(chart_specs, n, seed, dim):
    """Uniform-parameter midpoint sampling of smooth 1d charts (d=2)."""
    rng = np.random.default_rng(seed)
    strata = []
    total_len = sum(length for _, length in chart_specs)
    pts_all, wts_all, fibers = [], [], []
    for chart, length in chart_specs:
        m = max(int(round(n * length / total_len)), 8)
        lo, hi = chart.bounds[0]
        step = (hi - lo) / m
        phase = rng.uniform(0.0, 1.0) * step
        t = lo + phase + step * np.arange(m)
        p = chart.point(t)
        speed = np.linalg.norm(chart.dpoint(t), axis=-1)
        u = chart.normal(t)
        pts_all.append(p)
        wts_all.append(speed * step)
        fibers.extend(FiberVector(ui) for ui in u)
    strata.append(
        Stratum(dim - 1, np.concatenate(pts_all), np.concatenate(wts_all), fibers)
    )
    return strata


# ======================================================================
# concrete shapes
# ======================================================================


class Ball(Shape):
    """Closed Euclidean ball."""

    is_convex = True

    def __init__(self, center, radius: float, name: str = "ball"):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        self.dim = self.center.size
        self.name = name

    def contains(self, x, tol=MEMBERSHIP_TOL):
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x - self.center, axis=-1) <= self.radius + tol

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    @property
    def diameter(self):
        return 2.0 * self.radius

    def volume(self):
        if self.dim == 2:
            return np.pi * self.radius**2
        return 4.0 / 3.0 * np.pi * self.radius**3

    def charts(self):
        c, R = self.center, self.radius
        if self.dim == 2:
            return [
                _FuncChart(
                    (0.0, 2 * np.pi),
                    lambda t: c + R * np.stack([np.cos(t), np.sin(t)], axis=-1),
                    lambda t: R * np.stack([-np.sin(t), np.cos(t)], axis=-1),
                    lambda t: np.stack([np.cos(t), np.sin(t)], axis=-1),
                    periodic=True,
                )
            ]
        return [SphereChart(lambda u: c + R * u, lambda u: u)]

    def boundary_strata(self, n=512, seed=0):
        if self.dim == 2:
            return _smooth_strata(
                [(self.charts()[0], 2 * np.pi * self.radius)], n, seed, self.dim
            )
        u = fibonacci_sphere(n)
        pts = self.center + self.radius * u
        w = np.full(n, 4 * np.pi * self.radius**2 / n)
        return [Stratum(2, pts, w, [FiberVector(ui) for ui in u])]

    def boundary_fiber_at(self, a, tol=1e-7):
        v = np.asarray(a, dtype=float) - self.center
        return FiberVector(v / np.linalg.norm(v))

    def exact_projection(self, norm, x):
        if norm.kind != "euclidean":
            return None
        x = np.atleast_2d(np.asarray(x, dtype=float))
        v = x - self.center
        r = np.linalg.norm(v, axis=-1)
        out = r > self.radius
        feet = np.where(
            out[:, None], self.center + self.radius * v / np.maximum(r, 1e-300)[:, None], x
        )
        return feet, np.maximum(r - self.radius, 0.0)

    def complement(self):
        return ComplementShape(self)


class Ellipsoid(Shape):
    """Solid ellipsoid with axis-aligned semiaxes."""

    is_convex = True

    def __init__(self, center, semiaxes, name: str = "ellipsoid"):
        self.center = np.asarray(center, dtype=float)
        self.semiaxes = np.asarray(semiaxes, dtype=float)
        if (self.semiaxes <= 0).any():
            raise ValueError("semiaxes must be positive")
        self.dim = self.center.size
        self.name = name

    def contains(self, x, tol=MEMBERSHIP_TOL):
        x = np.asarray(x, dtype=float)
        q = np.linalg.norm((x - self.center) / self.semiaxes, axis=-1)
        return q <= 1.0 + tol

    def bounding_box(self):
        return self.center - self.semiaxes, self.center + self.semiaxes

    @property
    def diameter(self):
        return 2.0 * float(self.semiaxes.max())

    def volume(self):
        if self.dim == 2:
            return np.pi * float(np.prod(self.semiaxes))
        return 4.0 / 3.0 * np.pi * float(np.prod(self.semiaxes))

    def _normal(self, u):
        # outward unit normal at boundary point center + semiaxes * u, |u| = 1
        g = u / self.semiaxes
        return g / np.linalg.norm(g, axis=-1, keepdims=True)

    def charts(self):
        c, ax = self.center, self.semiaxes
        if self.dim == 2:
            a, b = ax

            def pt(t):
                return c + np.stack([a * np.cos(t), b * np.sin(t)], axis=-1)

            def dp(t):
                return np.stack([-a * np.sin(t), b * np.cos(t)], axis=-1)

            def nm(t):
                u = np.stack([np.cos(t), np.sin(t)], axis=-1)
                return self._normal(u)

            return [_FuncChart((0.0, 2 * np.pi), pt, dp, nm, periodic=True)]
        return [SphereChart(lambda u: c + ax * u, self._normal)]

    def boundary_strata(self, n=512, seed=0):
        if self.dim == 2:
            # parameter-space speed handled by the chart derivative
            peri_est = np.pi * (3 * self.semiaxes.sum() - np.sqrt(
                (3 * self.semiaxes[0] + self.semiaxes[1])
                * (self.semiaxes[0] + 3 * self.semiaxes[1])
            ))  # Ramanujan, only used for sample budgeting
            return _smooth_strata([(self.charts()[0], peri_est)], n, seed, self.dim)
        u = fibonacci_sphere(n)
        pts = self.center + self.semiaxes * u
        # area element of the linear map restricted to the sphere tangent
        from .norms import tangent_basis

        T = tangent_basis(u)
        a1 = T[:, 0, :] * self.semiaxes
        a2 = T[:, 1, :] * self.semiaxes
        jac = np.linalg.norm(np.cross(a1, a2), axis=-1)
        w = jac * (4 * np.pi / n)
        return [Stratum(2, pts, w, [FiberVector(ui) for ui in self._normal(u)])]

    def boundary_fiber_at(self, a, tol=1e-7):
        u = (np.asarray(a, dtype=float) - self.center) / self.semiaxes
        return FiberVector(self._normal(u / np.linalg.norm(u)))

    def exact_projection(self, norm, x):
        # exact when the ellipsoid is the unit body of norm's dual (Wulff shape)
        if norm.kind != "ellipsoidal":
            return None
        want = np.diag(self.semiaxes**2)
        if not np.allclose(norm.Q, want, rtol=1e-12, atol=1e-12):
            return None
        x = np.atleast_2d(np.asarray(x, dtype=float))
        v = x - self.center
        g = norm.conjugate(v)
        out = g > 1.0
        feet = np.where(out[:, None], self.center + v / np.maximum(g, 1e-300)[:, None], x)
        return feet, np.maximum(g - 1.0, 0.0)

    def complement(self):
        return ComplementShape(self)


class WulffBody(Shape):
    """Scaled copy of the dual unit body of a norm: {phi_*(x - c) <= rho}."""

    is_convex = True

    def __init__(self, norm: Norm, center=None, radius: float = 1.0, name: str = "wulff"):
        self.norm = norm
        self.dim = norm.dim
        self.center = (
            np.zeros(self.dim) if center is None else np.asarray(center, dtype=float)
        )
        self.radius = float(radius)
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        self.name = name
        self._volume_cache: Optional[float] = None

    def contains(self, x, tol=MEMBERSHIP_TOL):
        x = np.asarray(x, dtype=float)
        return self.norm.conjugate(x - self.center) <= self.radius + tol

    def bounding_box(self):
        # support of W in axis directions: h_W(e) = phi(e)
        ext = np.array(
            [self.norm.value(np.eye(self.dim)[i]) for i in range(self.dim)]
        )
        return self.center - self.radius * ext, self.center + self.radius * ext

    def volume(self):
        if self._volume_cache is None:
            # divergence theorem over the normal parametrization of bd W:
            # x . nu = phi(u) there, so vol = rho^d/d * int phi(u) J(u) dsigma
            n = self.norm
            if self.dim == 2:
                t = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
                u = np.c_[np.cos(t), np.sin(t)]
                du = np.c_[-np.sin(t), np.cos(t)]
                speed = np.linalg.norm(
                    np.einsum("mde,me->md", n.hessian(u), du), axis=-1
                )
                integral = float(np.sum(n.value(u) * speed) * (2 * np.pi / len(t)))
            else:
                from .norms import tangent_basis

                u = fibonacci_sphere(8192)
                T = tangent_basis(u)
                H = n.hessian(u)
                j1 = np.einsum("mde,me->md", H, T[:, 0, :])
                j2 = np.einsum("mde,me->md", H, T[:, 1, :])
                jac = np.linalg.norm(np.cross(j1, j2), axis=-1)
                integral = float(np.sum(n.value(u) * jac) * (4 * np.pi / len(u)))
            self._volume_cache = self.radius**self.dim / self.dim * integral
        return self._volume_cache

    def charts(self):
        c, rho, n = self.center, self.radius, self.norm
        if self.dim == 2:

            def pt(t):
                u = np.stack([np.cos(t), np.sin(t)], axis=-1)
                return c + rho * n.grad(u)

            def dp(t):
                u = np.stack([np.cos(t), np.sin(t)], axis=-1)
                du = np.stack([-np.sin(t), np.cos(t)], axis=-1)
                return rho * np.einsum("...de,...e->...d", n.hessian(u), du)

            def nm(t):
                return np.stack([np.cos(t), np.sin(t)], axis=-1)

            return [_FuncChart((0.0, 2 * np.pi), pt, dp, nm, periodic=True)]
        return [SphereChart(lambda u: c + rho * n.grad(u), lambda u: u)]

    def boundary_strata(self, n=512, seed=0):
        if self.dim == 2:
            peri = 2 * np.pi * self.radius * 1.5  # budgeting only
            return _smooth_strata([(self.charts()[0], peri)], n, seed, self.dim)
        from .norms import tangent_basis

        u = fibonacci_sphere(n)
        pts = self.center + self.radius * self.norm.grad(u)
        T = tangent_basis(u)
        H = self.norm.hessian(u)
        j1 = self.radius * np.einsum("mde,me->md", H, T[:, 0, :])
        j2 = self.radius * np.einsum("mde,me->md", H, T[:, 1, :])
        jac = np.linalg.norm(np.cross(j1, j2), axis=-1)
        w = jac * (4 * np.pi / n)
        return [Stratum(2, pts, w, [FiberVector(ui) for ui in u])]

    def boundary_fiber_at(self, a, tol=1e-7):
        v = np.asarray(a, dtype=float) - self.center
        return FiberVector(self.norm.gauss_map(v))

    def exact_projection(self, norm, x):
        if norm is not self.norm:
            # same-parameter copies also qualify
            same = (
                norm.kind == self.norm.kind
                and norm.dim == self.norm.dim
                and (
                    norm.kind == "euclidean"
                    or (
                        norm.kind == "ellipsoidal"
                        and np.allclose(norm.Q, self.norm.Q, rtol=1e-12)
                    )
                )
            )
            if not same:
                return None
        x = np.atleast_2d(np.asarray(x, dtype=float))
        v = x - self.center
        g = norm.conjugate(v)
        out = g > self.radius
        feet = np.where(
            out[:, None],
            self.center + self.radius * v / np.maximum(g, 1e-300)[:, None],
            x,
        )
        return feet, np.maximum(g - self.radius, 0.0)

    def complement(self):
        return ComplementShape(self)


class ConvexPolytope(Shape):
    """Convex polygon (d=2, from vertices) or axis-aligned box (d=3)."""

    is_convex = True

    def __init__(self, vertices, name: str = "polytope"):
        v = np.asarray(vertices, dtype=float)
        self.dim = v.shape[1]
        self.name = name
        if self.dim == 2:
            ctr = v.mean(axis=0)
            order = np.argsort(np.arctan2(v[:, 1] - ctr[1], v[:, 0] - ctr[0]))
            self.vertices = v[order]
            self._setup_polygon()
        elif self.dim == 3:
            lo, hi = v.min(axis=0), v.max(axis=0)
            box = np.array(
                [[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])]
            )
            ok = len(v) == 8 and all(
                np.isclose(box, vi, atol=1e-12).all(axis=1).any() for vi in v
            )
            if not ok:
                raise NotImplementedError(
                    "3d polytopes are supported as axis-aligned boxes only"
                )
            self.lo, self.hi = lo, hi
            self.vertices = box
        else:
            raise ValueError("dim must be 2 or 3")

    @classmethod
    def box(cls, lo, hi, name="box"):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.size == 2:
            verts = [[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]]
        else:
            verts = [
                [x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])
            ]
        return cls(verts, name=name)

    # ---------------- 2d polygon internals ----------------
    def _setup_polygon(self):
        v = self.vertices
        nv = len(v)
        edges = v[(np.arange(nv) + 1) % nv] - v
        lengths = np.linalg.norm(edges, axis=-1)
        if (lengths < 1e-12).any():
            raise ValueError("degenerate polygon edge")
        tangents = edges / lengths[:, None]
        normals = np.c_[tangents[:, 1], -tangents[:, 0]]  # outward for ccw order
        # enforce ccw orientation
        area2 = float(np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1]))
        if area2 < 0:
            self.vertices = v = v[::-1]
            edges = v[(np.arange(nv) + 1) % nv] - v
            lengths = np.linalg.norm(edges, axis=-1)
            tangents = edges / lengths[:, None]
            normals = np.c_[tangents[:, 1], -tangents[:, 0]]
        cross = tangents[:, 0] * np.roll(tangents[:, 1], -1) - tangents[:, 1] * np.roll(
            tangents[:, 0], -1
        )
        if (cross < -1e-12).any():
            raise ValueError("vertices do not describe a convex polygon")
        self._edges, self._lengths = edges, lengths
        self._tangents, self._normals = tangents, normals

    def contains(self, x, tol=MEMBERSHIP_TOL):
        x = np.asarray(x, dtype=float)
        if self.dim == 3:
            return ((x >= self.lo - tol) & (x <= self.hi + tol)).all(axis=-1)
        v = self.vertices
        sig = np.einsum("...d,kd->...k", x, self._normals) - np.einsum(
            "kd,kd->k", v, self._normals
        )
        return (sig <= tol).all(axis=-1)

    def bounding_box(self):
        if self.dim == 3:
            return self.lo.copy(), self.hi.copy()
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @property
    def diameter(self):
        v = self.vertices
        d2 = ((v[:, None, :] - v[None, :, :]) ** 2).sum(-1)
        return float(np.sqrt(d2.max()))

    def volume(self):
        if self.dim == 3:
            return float(np.prod(self.hi - self.lo))
        v = self.vertices
        return 0.5 * float(
            np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
        )

    def corner_points(self):
        return self.vertices.copy()

    # ---------------- strata ----------------
    def boundary_strata(self, n=512, seed=0):
        rng = np.random.default_rng(seed)
        if self.dim == 2:
            v, L = self.vertices, self._lengths
            nv = len(v)
            pts, wts, fibers = [], [], []
            for i in range(nv):
                m = max(int(round(n * L[i] / L.sum())), 4)
                # midpoint rule with seeded phase: exact total weight per edge
                s = (np.arange(m) + rng.uniform(0.2, 0.8)) / m
                pts.append(v[i] + s[:, None] * self._edges[i])
                wts.append(np.full(m, L[i] / m))
                fibers += [FiberVector(self._normals[i])] * m
            strata = [Stratum(1, np.concatenate(pts), np.concatenate(wts), fibers)]
            corner_fibers = []
            for i in range(nv):
                n_prev = self._normals[i - 1]
                n_next = self._normals[i]
                t0 = np.arctan2(n_prev[1], n_prev[0])
                t1 = np.arctan2(n_next[1], n_next[0])
                if t1 < t0:
                    t1 += 2 * np.pi
                corner_fibers.append(FiberArc(t0, t1))
            strata.append(Stratum(0, v.copy(), np.ones(nv), corner_fibers))
            return strata
        return self._box_strata(n, rng)

    def _box_strata(self, n, rng):
        lo, hi = self.lo, self.hi
        ext = hi - lo
        # facets (stratum 2)
        pts, wts, fibers = [], [], []
        areas = []
        for axis in range(3):
            a = np.prod(np.delete(ext, axis))
            areas += [a, a]
        total_area = sum(areas)
        fi = 0
        for axis in range(3):
            others = [k for k in range(3) if k != axis]
            for side, coord in ((-1.0, lo[axis]), (1.0, hi[axis])):
                m = max(int(round(n * areas[fi] / total_area)), 4)
                fi += 1
                g = max(int(np.sqrt(m)), 2)
                s1 = (np.arange(g) + rng.uniform(0.2, 0.8)) / g
                s2 = (np.arange(g) + rng.uniform(0.2, 0.8)) / g
                S1, S2 = np.meshgrid(s1, s2, indexing="ij")
                p = np.empty((g * g, 3))
                p[:, axis] = coord
                p[:, others[0]] = lo[others[0]] + S1.ravel() * ext[others[0]]
                p[:, others[1]] = lo[others[1]] + S2.ravel() * ext[others[1]]
                nrm = np.zeros(3)
                nrm[axis] = side
                pts.append(p)
                wts.append(np.full(g * g, np.prod(ext[others]) / (g * g)))
                fibers += [FiberVector(nrm)] * (g * g)
        strata = [Stratum(2, np.concatenate(pts), np.concatenate(wts), fibers)]
        # edges (stratum 1)
        e_pts, e_wts, e_fibers = [], [], []
        for axis in range(3):
            others = [k for k in range(3) if k != axis]
            for sa in (0, 1):
                for sb in (0, 1):
                    ca = (lo, hi)[sa][others[0]]
                    cb = (lo, hi)[sb][others[1]]
                    m = max(int(round(n / 24)), 4)
                    s = (np.arange(m) + rng.uniform(0.2, 0.8)) / m
                    p = np.empty((m, 3))
                    p[:, axis] = lo[axis] + s * ext[axis]
                    p[:, others[0]] = ca
                    p[:, others[1]] = cb
                    n0 = np.zeros(3)
                    n0[others[0]] = -1.0 if sa == 0 else 1.0
                    n1 = np.zeros(3)
                    n1[others[1]] = -1.0 if sb == 0 else 1.0
                    e_pts.append(p)
                    e_wts.append(np.full(m, ext[axis] / m))
                    e_fibers += [FiberEdgeArc(n0, n1)] * m
        strata.append(Stratum(1, np.concatenate(e_pts), np.concatenate(e_wts), e_fibers))
        # vertices (stratum 0)
        v_fibers = []
        for vtx in self.vertices:
            gens = []
            for axis in range(3):
                g = np.zeros(3)
                g[axis] = -1.0 if np.isclose(vtx[axis], lo[axis]) else 1.0
                gens.append(g)
            # order generators so consecutive ones are adjacent (any order of 3 works)
            v_fibers.append(FiberPatch(np.stack(gens)))
        strata.append(Stratum(0, self.vertices.copy(), np.ones(len(self.vertices)), v_fibers))
        return strata

    def boundary_fiber_at(self, a, tol=1e-7):
        a = np.asarray(a, dtype=float)
        if self.dim == 3:
            on_lo = np.isclose(a, self.lo, atol=tol)
            on_hi = np.isclose(a, self.hi, atol=tol)
            k = int(on_lo.sum() + on_hi.sum())
            gens = []
            for axis in range(3):
                if on_lo[axis]:
                    g = np.zeros(3)
                    g[axis] = -1.0
                    gens.append(g)
                elif on_hi[axis]:
                    g = np.zeros(3)
                    g[axis] = 1.0
                    gens.append(g)
            if k == 1:
                return FiberVector(gens[0])
            if k == 2:
                return FiberEdgeArc(gens[0], gens[1])
            return FiberPatch(np.stack(gens))
        # 2d: vertex or edge?
        for i, vtx in enumerate(self.vertices):
            if np.linalg.norm(a - vtx) <= tol:
                n_prev = self._normals[i - 1]
                n_next = self._normals[i]
                t0 = np.arctan2(n_prev[1], n_prev[0])
                t1 = np.arctan2(n_next[1], n_next[0])
                if t1 < t0:
                    t1 += 2 * np.pi
                return FiberArc(t0, t1)
        for i in range(len(self.vertices)):
            rel = a - self.vertices[i]
            t = rel @ self._tangents[i]
            if -tol <= t <= self._lengths[i] + tol:
                if abs(rel @ self._normals[i]) <= tol:
                    return FiberVector(self._normals[i])
        raise ValueError("point is not on the boundary")

    def charts(self):
        if self.dim == 3:
            lo, hi, ext = self.lo, self.hi, self.hi - self.lo
            out = []
            for axis in range(3):
                o1, o2 = [k for k in range(3) if k != axis]
                e0 = np.eye(3)[o1]
                e1 = np.eye(3)[o2]
                for side, coord in ((-1.0, lo[axis]), (1.0, hi[axis])):
                    origin = lo.copy()
                    origin[axis] = coord
                    nrm = np.zeros(3)
                    nrm[axis] = side
                    out.append(_PlanarChart(origin, e0, e1, (ext[o1], ext[o2]), nrm))
            return out
        out = []
        for i in range(len(self.vertices)):
            v0 = self.vertices[i]
            e = self._edges[i]
            nrm = self._normals[i]
            out.append(
                _FuncChart(
                    (0.0, 1.0),
                    lambda t, v0=v0, e=e: v0 + np.asarray(t)[..., None] * e,
                    lambda t, e=e: np.broadcast_to(e, np.shape(t) + (2,)).copy(),
                    lambda t, nrm=nrm: np.broadcast_to(nrm, np.shape(t) + (2,)).copy(),
                )
            )
        return out

    def exact_projection(self, norm, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.dim == 3:
            if norm.kind == "euclidean":
                feet = np.clip(x, self.lo, self.hi)
                return feet, np.linalg.norm(x - feet, axis=-1)
            if norm.kind == "ellipsoidal" and np.allclose(
                norm.Q, np.diag(np.diag(norm.Q))
            ):
                # diagonal dual transform preserves axis boxes, so clamping
                # in original coordinates is the exact nearest point
                feet = np.clip(x, self.lo, self.hi)
                return feet, norm.conjugate(x - feet)
            return None
        if norm.kind == "euclidean":
            return self._euclid_polygon_projection(x)
        if norm.kind == "ellipsoidal" and self._is_axis_box() and np.allclose(
            norm.Q, np.diag(np.diag(norm.Q))
        ):
            lo, hi = self.bounding_box()
            feet = np.clip(x, lo, hi)
            return feet, norm.conjugate(x - feet)
        return None

    def _is_axis_box(self):
        if self.dim != 2 or len(self.vertices) != 4:
            return False
        lo, hi = self.bounding_box()
        want = {(lo[0], lo[1]), (hi[0], lo[1]), (hi[0], hi[1]), (lo[0], hi[1])}
        got = {tuple(v) for v in self.vertices}
        return want == got

    def _euclid_polygon_projection(self, x):
        v = self.vertices
        nv = len(v)
        best_d2 = np.full(len(x), np.inf)
        best_foot = np.empty_like(x)
        for i in range(nv):
            rel = x - v[i]
            t = np.clip(rel @ self._edges[i] / self._lengths[i] ** 2, 0.0, 1.0)
            foot = v[i] + t[:, None] * self._edges[i]
            d2 = ((x - foot) ** 2).sum(-1)
            better = d2 < best_d2
            best_d2[better] = d2[better]
            best_foot[better] = foot[better]
        inside = self.contains(x, tol=0.0)
        feet = np.where(inside[:, None], x, best_foot)
        return feet, np.where(inside, 0.0, np.sqrt(best_d2))

    def complement(self):
        return ComplementShape(self)


class CapLens(Shape):
    """Convex lens: intersection of unit disks centered (0, -eps) and (0, eps).

    Equivalently two spherical caps of height cut eps glued along their common
    disk; the corners at (+-sqrt(1-eps^2), 0) carry normal fans of angular
    width 2*arcsin(eps).
    """

    is_convex = True
    dim = 2

    def __init__(self, eps: float, name: str = "cap-lens"):
        if not (0.0 < eps < 1.0):
            raise ValueError("eps must lie in (0, 1)")
        self.eps = float(eps)
        self.name = name
        self.half_width = np.sqrt(1.0 - eps * eps)
        self.centers = np.array([[0.0, -eps], [0.0, eps]])  # upper arc, lower arc
        self.beta = np.arcsin(eps)  # corner fan half-width

    def contains(self, x, tol=MEMBERSHIP_TOL):
        x = np.asarray(x, dtype=float)
        d0 = np.linalg.norm(x - self.centers[0], axis=-1)
        d1 = np.linalg.norm(x - self.centers[1], axis=-1)
        return (d0 <= 1.0 + tol) & (d1 <= 1.0 + tol)

    def bounding_box(self):
        return (
            np.array([-self.half_width, -(1.0 - self.eps)]),
            np.array([self.half_width, 1.0 - self.eps]),
        )

    @property
    def diameter(self):
        return 2.0 * self.half_width

    def volume(self):
        e = self.eps
        return 2.0 * (np.arccos(e) - e * np.sqrt(1 - e * e))

    def smooth_perimeter(self):
        return 4.0 * np.arccos(self.eps)

    def corner_points(self):
        return np.array([[self.half_width, 0.0], [-self.half_width, 0.0]])

    def charts(self):
        beta = self.beta
        out = []
        for c, (t0, t1) in [
            (self.centers[0], (beta, np.pi - beta)),  # upper arc
            (self.centers[1], (np.pi + beta, 2 * np.pi - beta)),  # lower arc
        ]:
            out.append(
                _FuncChart(
                    (t0, t1),
                    lambda t, c=c: c + np.stack([np.cos(t), np.sin(t)], axis=-1),
                    lambda t: np.stack([-np.sin(t), np.cos(t)], axis=-1),
                    lambda t: np.stack([np.cos(t), np.sin(t)], axis=-1),
                )
            )
        return out

    def boundary_strata(self, n=512, seed=0):
        arc_len = 2.0 * np.arccos(self.eps)
        strata = _smooth_strata(
            [(ch, arc_len) for ch in self.charts()], n, seed, self.dim
        )
        corner_fibers = [
            FiberArc(-self.beta, self.beta),  # right corner
            FiberArc(np.pi - self.beta, np.pi + self.beta),  # left corner
        ]
        strata.append(Stratum(0, self.corner_points(), np.ones(2), corner_fibers))
        return strata

    def boundary_fiber_at(self, a, tol=1e-7):
        a = np.asarray(a, dtype=float)
        for corner, fib in zip(
            self.corner_points(),
            [FiberArc(-self.beta, self.beta), FiberArc(np.pi - self.beta, np.pi + self.beta)],
        ):
            if np.linalg.norm(a - corner) <= tol:
                return fib
        which = 0 if a[1] > 0 else 1
        v = a - self.centers[which]
        return FiberVector(v / np.linalg.norm(v))

    def exact_projection(self, norm, x):
        if norm.kind != "euclidean":
            return None
        x = np.atleast_2d(np.asarray(x, dtype=float))
        beta = self.beta
        best_d = np.full(len(x), np.inf)
        best_foot = np.empty_like(x)
        for c, (t0, t1) in [
            (self.centers[0], (beta, np.pi - beta)),
            (self.centers[1], (np.pi + beta, 2 * np.pi - beta)),
        ]:
            v = x - c
            ang = np.mod(np.arctan2(v[:, 1], v[:, 0]), 2 * np.pi)
            valid = (ang >= t0) & (ang <= t1)
            r = np.linalg.norm(v, axis=-1)
            foot = c + v / np.maximum(r, 1e-300)[:, None]
            d = np.abs(r - 1.0)
            upd = valid & (d < best_d)
            best_d[upd] = d[upd]
            best_foot[upd] = foot[upd]
        for corner in self.corner_points():
            d = np.linalg.norm(x - corner, axis=-1)
            upd = d < best_d
            best_d[upd] = d[upd]
            best_foot[upd] = corner
        inside = self.contains(x, tol=0.0)
        feet = np.where(inside[:, None], x, best_foot)
        return feet, np.where(inside, 0.0, best_d)

    def complement(self):
        return ComplementShape(self)


class SegmentUnion(Shape):
    """Union of closed line segments in the plane (a set with empty interior)."""

    dim = 2

    def __init__(self, segments: Sequence, name: str = "segments"):
        segs = [(np.asarray(p, dtype=float), np.asarray(q, dtype=float)) for p, q in segments]
        if not segs:
            raise ValueError("need at least one segment")
        self.segments = segs
        self.name = name
        self.is_convex = len(segs) == 1

    def contains(self, x, tol=MEMBERSHIP_TOL):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        hit = np.zeros(len(x), dtype=bool)
        for p, q in self.segments:
            e = q - p
            L2 = e @ e
            t = np.clip((x - p) @ e / L2, 0.0, 1.0)
            foot = p + t[:, None] * e
            hit |= np.linalg.norm(x - foot, axis=-1) <= tol
        return hit

    def bounding_box(self):
        allp = np.concatenate([[p, q] for p, q in self.segments])
        return allp.min(axis=0), allp.max(axis=0)

    @property
    def diameter(self):
        allp = np.concatenate([[p, q] for p, q in self.segments])
        d2 = ((allp[:, None, :] - allp[None, :, :]) ** 2).sum(-1)
        return float(np.sqrt(d2.max()))

    def volume(self):
        return 0.0

    def total_length(self):
        return sum(float(np.linalg.norm(q - p)) for p, q in self.segments)

    def corner_points(self):
        return np.concatenate([[p, q] for p, q in self.segments])

    def charts(self):
        out = []
        for p, q in self.segments:
            e = q - p
            nrm = np.array([e[1], -e[0]]) / np.linalg.norm(e)
            out.append(
                _FuncChart(
                    (0.0, 1.0),
                    lambda t, p=p, e=e: p + np.asarray(t)[..., None] * e,
                    lambda t, e=e: np.broadcast_to(e, np.shape(t) + (2,)).copy(),
                    lambda t, nrm=nrm: np.broadcast_to(nrm, np.shape(t) + (2,)).copy(),
                )
            )
        return out

    def boundary_strata(self, n=512, seed=0):
        rng = np.random.default_rng(seed)
        total = self.total_length()
        pts, wts, fibers = [], [], []
        for p, q in self.segments:
            L = float(np.linalg.norm(q - p))
            e = (q - p) / L
            nrm = np.array([e[1], -e[0]])
            m = max(int(round(n * L / total)), 8)
            s = (np.arange(m) + rng.uniform(0.2, 0.8)) / m
            pts.append(p + (s * L)[:, None] * e)
            wts.append(np.full(m, L / m))
            fibers += [FiberPair(nrm)] * m
        strata = [Stratum(1, np.concatenate(pts), np.concatenate(wts), fibers)]
        # endpoints: half-circle fans opening away from the segment
        e_pts, e_fibers = [], []
        for p, q in self.segments:
            e = (q - p) / np.linalg.norm(q - p)
            for pt, outward in ((p, -e), (q, e)):
                t_mid = np.arctan2(outward[1], outward[0])
                e_pts.append(pt)
                e_fibers.append(FiberArc(t_mid - np.pi / 2, t_mid + np.pi / 2))
        strata.append(
            Stratum(0, np.stack(e_pts), np.ones(len(e_pts)), e_fibers)
        )
        return strata

    def boundary_fiber_at(self, a, tol=1e-7):
        a = np.asarray(a, dtype=float)
        for p, q in self.segments:
            e = (q - p) / np.linalg.norm(q - p)
            for pt, outward in ((p, -e), (q, e)):
                if np.linalg.norm(a - pt) <= tol:
                    t_mid = np.arctan2(outward[1], outward[0])
                    return FiberArc(t_mid - np.pi / 2, t_mid + np.pi / 2)
        for p, q in self.segments:
            e = q - p
            t = (a - p) @ e / (e @ e)
            foot = p + t * e
            if 0 <= t <= 1 and np.linalg.norm(a - foot) <= tol:
                nrm = np.array([e[1], -e[0]]) / np.linalg.norm(e)
                return FiberPair(nrm)
        raise ValueError("point is not on the set")

    def exact_projection(self, norm, x):
        if norm.kind != "euclidean":
            return None
        x = np.atleast_2d(np.asarray(x, dtype=float))
        best_d = np.full(len(x), np.inf)
        best_foot = np.empty_like(x)
        for p, q in self.segments:
            e = q - p
            t = np.clip((x - p) @ e / (e @ e), 0.0, 1.0)
            foot = p + t[:, None] * e
            d = np.linalg.norm(x - foot, axis=-1)
            upd = d < best_d
            best_d[upd] = d[upd]
            best_foot[upd] = foot[upd]
        return best_foot, best_d


class DisjointUnion(Shape):
    """Union of components with strictly positive pairwise gaps."""

    def __init__(self, components: Sequence[Shape], margin: float = 1e-6, name: str = "union"):
        if len(components) < 2:
            raise ValueError("need at least two components")
        dims = {c.dim for c in components}
        if len(dims) != 1:
            raise ValueError("mixed dimensions")
        self.components = list(components)
        self.dim = dims.pop()
        self.name = name
        self.is_convex = False
        self._validate_gaps(margin)

    def _validate_gaps(self, margin):
        clouds = [c.boundary_cloud(k=256)[0] for c in self.components]
        for i in range(len(clouds)):
            for j in range(len(clouds)):
                if i == j:
                    continue
                # no boundary point of one component may fall inside another
                if self.components[j].contains(clouds[i], tol=0.0).any():
                    raise ValueError(f"components {i} and {j} overlap")
                if j < i:
                    continue
                d = np.sqrt(
                    ((clouds[i][:, None, :] - clouds[j][None, :, :]) ** 2).sum(-1)
                ).min()
                # dense-cloud gap estimate; components must be honestly apart
                if d <= margin:
                    raise ValueError(
                        f"components {i} and {j} are not separated (gap ~{d:.2e})"
                    )

    def contains(self, x, tol=MEMBERSHIP_TOL):
        out = self.components[0].contains(x, tol)
        for c in self.components[1:]:
            out = out | c.contains(x, tol)
        return out

    def bounding_box(self):
        boxes = [c.bounding_box() for c in self.components]
        lo = np.min([b[0] for b in boxes], axis=0)
        hi = np.max([b[1] for b in boxes], axis=0)
        return lo, hi

    def volume(self):
        vols = [c.volume() for c in self.components]
        return None if any(v is None for v in vols) else float(sum(vols))

    def corner_points(self):
        pts = [c.corner_points() for c in self.components]
        return np.concatenate(pts) if pts else np.empty((0, self.dim))

    def charts(self):
        return [ch for c in self.components for ch in c.charts()]

    def boundary_strata(self, n=512, seed=0):
        merged: dict[int, list[Stratum]] = {}
        for k, comp in enumerate(self.components):
            for s in comp.boundary_strata(n=max(n // len(self.components), 32), seed=seed + k):
                merged.setdefault(s.index, []).append(s)
        out = []
        for idx, parts in sorted(merged.items(), reverse=True):
            out.append(
                Stratum(
                    idx,
                    np.concatenate([p.points for p in parts]),
                    np.concatenate([p.weights for p in parts]),
                    [f for p in parts for f in p.fibers],
                )
            )
        return out

    def boundary_fiber_at(self, a, tol=1e-7):
        for c in self.components:
            try:
                return c.boundary_fiber_at(a, tol)
            except ValueError:
                continue
        raise ValueError("point is not on the boundary of any component")

    def exact_projection(self, norm, x):
        results = [c.exact_projection(norm, x) for c in self.components]
        if any(r is None for r in results):
            return None
        x = np.atleast_2d(np.asarray(x, dtype=float))
        feet = results[0][0].copy()
        delta = results[0][1].copy()
        for f, d in results[1:]:
            upd = d < delta
            delta[upd] = d[upd]
            feet[upd] = f[upd]
        return feet, delta

    def complement(self):
        return ComplementShape(self)


class ComplementShape(Shape):
    """Closure of the complement of a body: normals flip, curvatures mirror."""

    def __init__(self, base: Shape):
        vol = base.volume()
        if vol is not None and vol <= 0:
            raise EmptyInteriorError(f"{base.name} has empty interior")
        self.base = base
        self.dim = base.dim
        self.name = f"complement-of-{base.name}"
        self.is_convex = False

    def contains(self, x, tol=MEMBERSHIP_TOL):
        # closed complement: everything except interior points of the base
        return ~self.base.contains(x, tol=-tol)

    def bounding_box(self):
        # finite window around the base; only used for sampling scales
        lo, hi = self.base.bounding_box()
        pad = 0.5 * np.linalg.norm(hi - lo)
        return lo - pad, hi + pad

    @property
    def diameter(self):
        return self.base.diameter

    def volume(self):
        return None

    def charts(self):
        return self.base.charts()

    def corner_points(self):
        return self.base.corner_points()

    def boundary_strata(self, n=512, seed=0):
        out = []
        for s in self.base.boundary_strata(n=n, seed=seed):
            flipped = []
            for f in s.fibers:
                if isinstance(f, FiberVector):
                    flipped.append(FiberVector(-np.asarray(f.u)))
                elif isinstance(f, FiberPair):
                    flipped.append(FiberPair(np.asarray(f.u)))
                else:
                    # corner fans of the base vanish on the complement side
                    flipped.append(None)
            keep = [i for i, f in enumerate(flipped) if f is not None]
            if keep:
                out.append(
                    Stratum(
                        s.index,
                        s.points[keep],
                        s.weights[keep],
                        [flipped[i] for i in keep],
                    )
                )
        return out

    def boundary_fiber_at(self, a, tol=1e-7):
        f = self.base.boundary_fiber_at(a, tol)
        if isinstance(f, FiberVector):
            return FiberVector(-np.asarray(f.u))
        raise ValueError("complement has no normals at base corner points")

    @staticmethod
    def _radial_dirs(v):
        """v with near-zero rows replaced by e1: at the exact center every
        boundary point is nearest, so any fixed direction gives a valid foot."""
        small = np.linalg.norm(v, axis=-1) < 1e-14
        if small.any():
            v = v.copy()
            v[small] = 0.0
            v[small, 0] = 1.0
        return v

    def exact_projection(self, norm, x):
        # mirror of the base's Wulff-type projections, valid for points inside
        x = np.atleast_2d(np.asarray(x, dtype=float))
        b = self.base
        if isinstance(b, Ball) and norm.kind == "euclidean":
            v = x - b.center
            r = np.linalg.norm(v, axis=-1)
            inside = r < b.radius
            w = self._radial_dirs(v)
            w = w / np.linalg.norm(w, axis=-1, keepdims=True)
            feet = np.where(inside[:, None], b.center + b.radius * w, x)
            return feet, np.where(inside, b.radius - r, 0.0)
        if isinstance(b, WulffBody):
            res = b.exact_projection(norm, x)
            if res is not None:
                v = x - b.center
                g = norm.conjugate(v)
                inside = g < b.radius
                w = self._radial_dirs(v)
                w = w / norm.conjugate(w)[:, None]
                feet = np.where(inside[:, None], b.center + b.radius * w, x)
                return feet, np.where(inside, b.radius - g, 0.0)
        if isinstance(b, Ellipsoid) and norm.kind == "ellipsoidal":
            want = np.diag(b.semiaxes**2)
            if np.allclose(norm.Q, want, rtol=1e-12, atol=1e-12):
                v = x - b.center
                g = norm.conjugate(v)
                inside = g < 1.0
                w = self._radial_dirs(v)
                w = w / norm.conjugate(w)[:, None]
                feet = np.where(inside[:, None], b.center + w, x)
                return feet, np.where(inside, 1.0 - g, 0.0)
        return None


# ======================================================================
# canonical catalog
# ======================================================================


def make_catalog_shape(key: str, norm: Optional[Norm] = None) -> Shape:
    """Construct the standard test sets by name.

    Keys: disk, unit-square, ellipse-2-1, two-disks-gap1, two-disks-mixed,
    cap-lens-0.25, cap-lens-0.5, segment-pair, wulff (needs norm),
    three-wulff (needs norm), cube, two-balls-3d, wulff-3d (needs norm).
    """
    if key == "disk":
        return Ball([0.0, 0.0], 1.0, name="disk")
    if key == "unit-square":
        return ConvexPolytope.box([-0.5, -0.5], [0.5, 0.5], name="unit-square")
    if key == "ellipse-2-1":
        return Ellipsoid([0.0, 0.0], [2.0, 1.0], name="ellipse-2-1")
    if key == "two-disks-gap1":
        return DisjointUnion(
            [Ball([-1.5, 0.0], 1.0, "left"), Ball([1.5, 0.0], 1.0, "right")],
            name="two-disks-gap1",
        )
    if key == "two-disks-far":
        return DisjointUnion(
            [Ball([-3.0, 0.0], 1.0, "left"), Ball([3.0, 0.0], 1.0, "right")],
            name="two-disks-far",
        )
    if key == "two-disks-mixed":
        return DisjointUnion(
            [Ball([-3.0, 0.0], 1.0, "small"), Ball([3.0, 0.0], 1.6, "big")],
            name="two-disks-mixed",
        )
    if key.startswith("cap-lens-"):
        return CapLens(float(key.rsplit("-", 1)[1]), name=key)
    if key == "segment-pair":
        return SegmentUnion(
            [((-2.0, 1.0), (2.0, 1.0)), ((-2.0, -1.0), (2.0, -1.0))],
            name="segment-pair",
        )
    if key == "wulff":
        assert norm is not None
        return WulffBody(norm, radius=1.0, name=f"wulff-{norm.kind}")
    if key == "three-wulff":
        assert norm is not None
        lo, hi = WulffBody(norm).bounding_box()
        step = 2.5 * float(np.max(hi - lo))
        comps = [
            WulffBody(norm, center=[i * step, 0.0], radius=1.0, name=f"w{i}")
            for i in (-1, 0, 1)
        ]
        return DisjointUnion(comps, name=f"three-wulff-{norm.kind}")
    if key == "cube":
        return ConvexPolytope.box([0.0, 0.0, 0.0], [1.0, 1.0, 1.0], name="cube")
    if key == "two-balls-3d":
        return DisjointUnion(
            [Ball([-3.0, 0.0, 0.0], 1.0, "left"), Ball([3.0, 0.0, 0.0], 1.0, "right")],
            name="two-balls-3d",
        )
    if key == "wulff-3d":
        assert norm is not None
        return WulffBody(norm, radius=1.0, name=f"wulff3d-{norm.kind}")
    raise KeyError(f"unknown catalog shape {key!r}")
