"""Convex bodies containing the origin in their interior.

A body is described by its gauge ``||x||_K`` and support function ``h_K``.
Two concrete kinds are provided: polytopes (halfspaces or vertices) and
ellipsoids ``{x : x^T A x <= 1}``.  ``SupportBody`` wraps an arbitrary support
function and is only used for analytic identities.
"""

import math

import numpy as np
from scipy.spatial import ConvexHull, HalfspaceIntersection

from .numerics import as_spd, fibonacci_directions, sphere_quadrature, unit_ball_volume


class BodyError(ValueError):
    pass


class ConvexBody:
    """Interface shared by all bodies."""

    dim: int

    def gauge(self, x):
        raise NotImplementedError

    def support(self, y):
        raise NotImplementedError

    def contains(self, x, tol=1e-12):
        return self.gauge(x) <= 1 + tol

    def polar(self):
        raise NotImplementedError

    def preimage(self, T):
        """The body ``{x : T x in K}``."""
        raise NotImplementedError

    def scaled(self, s):
        raise NotImplementedError

    def volume(self):
        raise NotImplementedError

    def coordinate_radius(self):
        """``max_{v in K} |v|_inf``."""
        raise NotImplementedError

    def ray_data(self, resolution=None):
        """Directions ``a_j`` and weights ``c_j`` for integration along rays.

        For every integrable ``F``,
        ``int F(x) dx = sum_j c_j int_0^inf F(r * x_j) r^(n-1) dr`` where
        ``||x_j||_K = 1`` and ``a_j`` is the gradient of the gauge at ``x_j``.
        Returns ``(a, c, x)``.
        """
        raise NotImplementedError

    def is_symmetric(self):
        raise NotImplementedError


class Polytope(ConvexBody):
    """Polytope ``{x : a_j . x <= 1}`` with vertices ``V``.

    Build with :meth:`from_halfspaces` or :meth:`from_vertices`.
    """

    def __init__(self, vertices):
        V = np.atleast_2d(np.asarray(vertices, dtype=float))
        self.dim = V.shape[1]
        if self.dim not in (1, 2, 3):
            raise BodyError("dimension must be 1, 2 or 3")
        if not np.all(np.isfinite(V)):
            raise BodyError("body is unbounded")
        if self.dim == 1:
            lo, hi = float(V.min()), float(V.max())
            if not (lo < 0 < hi):
                raise BodyError("origin must lie strictly inside the body")
            self.vertices = np.array([[hi], [lo]])
            self.facets = np.array([[1.0 / hi], [1.0 / lo]])
            self._facet_measure = np.array([1.0, 1.0])
            self._facet_point = self.vertices.copy()
            return
        try:
            hull = ConvexHull(V)
        except Exception as exc:  # qhull raises its own error type
            raise BodyError(f"degenerate vertex set: {exc}") from None
        eq = hull.equations  # normal . x + offset <= 0
        if np.any(eq[:, -1] >= -1e-12):
            raise BodyError("origin must lie strictly inside the body")
        a = eq[:, :-1] / (-eq[:, -1:])
        key = np.round(a, 9)
        uniq, inv = np.unique(key, axis=0, return_inverse=True)
        inv = np.ravel(inv)
        facets = np.zeros((len(uniq), self.dim))
        measure = np.zeros(len(uniq))
        moment = np.zeros((len(uniq), self.dim))
        pts = hull.points
        for s, j in zip(hull.simplices, inv):
            facets[j] = a[np.flatnonzero(inv == j)[0]]
            P = pts[s]
            if self.dim == 2:
                m = np.linalg.norm(P[1] - P[0])
            else:
                m = 0.5 * np.linalg.norm(np.cross(P[1] - P[0], P[2] - P[0]))
            measure[j] += m
            moment[j] += m * P.mean(axis=0)
        self.vertices = pts[hull.vertices]
        self.facets = facets
        self._facet_measure = measure
        self._facet_point = moment / measure[:, None]

    @classmethod
    def from_vertices(cls, vertices):
        return cls(vertices)

    @classmethod
    def from_halfspaces(cls, normals, offsets):
        """``{x : normals[i] . x <= offsets[i]}``; offsets must be positive."""
        N = np.atleast_2d(np.asarray(normals, dtype=float))
        b = np.asarray(offsets, dtype=float).ravel()
        if N.shape[0] != b.size:
            raise BodyError("normals and offsets differ in length")
        if np.any(b <= 0):
            raise BodyError("origin must lie strictly inside the body (offsets > 0)")
        dim = N.shape[1]
        A = N / b[:, None]
        if dim == 1:
            pos, neg = A[A[:, 0] > 0, 0], A[A[:, 0] < 0, 0]
            if pos.size == 0 or neg.size == 0:
                raise BodyError("body is unbounded")
            return cls(np.array([[1.0 / pos.max()], [1.0 / neg.min()]]))
        try:
            hs = HalfspaceIntersection(np.hstack([A, -np.ones((len(A), 1))]), np.zeros(dim))
        except Exception as exc:
            raise BodyError(f"halfspace intersection failed: {exc}") from None
        V = hs.intersections
        if not np.all(np.isfinite(V)) or np.max(np.abs(V)) > 1e12:
            raise BodyError("body is unbounded")
        return cls(V)

    @classmethod
    def regular(cls, m, dim=2, radius=1.0, phase=0.0):
        t = phase + 2 * np.pi * np.arange(m) / m
        return cls(radius * np.stack([np.cos(t), np.sin(t)], axis=1))

    @classmethod
    def cube(cls, dim, half=1.0):
        N = np.vstack([np.eye(dim), -np.eye(dim)])
        return cls.from_halfspaces(N, np.full(2 * dim, half))

    def gauge(self, x):
        x = np.asarray(x, dtype=float)
        return np.maximum(np.max(x @ self.facets.T, axis=-1), 0.0)

    def support(self, y):
        y = np.asarray(y, dtype=float)
        return np.max(y @ self.vertices.T, axis=-1)

    def polar(self):
        return Polytope(self.facets)

    def preimage(self, T):
        T = np.atleast_2d(np.asarray(T, dtype=float))
        return Polytope(np.linalg.solve(T, self.vertices.T).T)

    def scaled(self, s):
        return Polytope(s * self.vertices)

    def volume(self):
        return float(np.sum(self._facet_measure / np.linalg.norm(self.facets, axis=1)) / self.dim)

    def coordinate_radius(self):
        return float(np.max(np.abs(self.vertices)))

    def ray_data(self, resolution=None):
        a = self.facets.copy()
        c = self._facet_measure / np.linalg.norm(a, axis=1)
        return a, c, self._facet_point.copy()

    def is_symmetric(self):
        V = self.vertices
        d = np.min(np.linalg.norm(V[:, None, :] + V[None, :, :], axis=-1), axis=1)
        return bool(np.all(d < 1e-9 * max(1.0, np.max(np.abs(V)))))

    def to_spec(self):
        return {"vertices": self.vertices.tolist()}

    def __repr__(self):
        return f"Polytope(dim={self.dim}, vertices={len(self.vertices)}, facets={len(self.facets)})"


class Ellipsoid(ConvexBody):
    """``{x : x^T A x <= 1}``."""

    def __init__(self, A):
        self.A = as_spd(A)
        self.dim = self.A.shape[0]
        self._Ainv = np.linalg.inv(self.A)
        self._L = np.linalg.cholesky(self.A)

    def gauge(self, x):
        x = np.asarray(x, dtype=float)
        return np.sqrt(np.maximum(np.einsum("...i,ij,...j->...", x, self.A, x), 0.0))

    def support(self, y):
        y = np.asarray(y, dtype=float)
        return np.sqrt(np.maximum(np.einsum("...i,ij,...j->...", y, self._Ainv, y), 0.0))

    def polar(self):
        return Ellipsoid(self._Ainv)

    def preimage(self, T):
        T = np.atleast_2d(np.asarray(T, dtype=float))
        return Ellipsoid(T.T @ self.A @ T)

    def scaled(self, s):
        return Ellipsoid(self.A / s**2)

    def volume(self):
        return unit_ball_volume(self.dim) / math.sqrt(np.linalg.det(self.A))

    def coordinate_radius(self):
        return float(np.sqrt(np.max(np.diag(self._Ainv))))

    def ray_data(self, resolution=None):
        # whitening x = L^{-T} w maps K onto the unit ball
        omega, w = sphere_quadrature(self.dim, resolution)
        a = omega @ self._L.T
        c = w / math.sqrt(np.linalg.det(self.A))
        x = np.linalg.solve(self._L.T, omega.T).T
        return a, c, x

    def is_symmetric(self):
        return True

    def to_spec(self):
        return {"ellipsoid": self.A.tolist()}

    def __repr__(self):
        return f"Ellipsoid(A={self.A.tolist()})"


class SupportBody(ConvexBody):
    """Body given only through its support function (evaluated on directions)."""

    def __init__(self, dim, support, directions=None):
        self.dim = dim
        self._h = support
        self._dirs = directions if directions is not None else fibonacci_directions(dim, 720 if dim == 2 else 4000)
        self._hd = self._h(self._dirs)

    def support(self, y):
        return self._h(np.asarray(y, dtype=float))

    def gauge(self, x):
        # ||x||_K = sup_y <x, y> / h_K(y)
        x = np.asarray(x, dtype=float)
        return np.maximum(np.max((x @ self._dirs.T) / self._hd, axis=-1), 0.0)

    def coordinate_radius(self):
        return float(max(np.max(self._h(np.eye(self.dim))), np.max(self._h(-np.eye(self.dim)))))

    def scaled(self, s):
        return SupportBody(self.dim, lambda y: s * self._h(y), self._dirs)

    def __repr__(self):
        return f"SupportBody(dim={self.dim})"


def body_from_spec(spec):
    """Parse ``{"normals", "offsets"}``, ``{"vertices"}`` or ``{"ellipsoid"}``."""
    if not isinstance(spec, dict):
        raise BodyError("body must be an object")
    if "vertices" in spec:
        return Polytope.from_vertices(spec["vertices"])
    if "normals" in spec:
        if "offsets" not in spec:
            raise BodyError("halfspace body needs 'offsets'")
        return Polytope.from_halfspaces(spec["normals"], spec["offsets"])
    if "ellipsoid" in spec:
        return Ellipsoid(spec["ellipsoid"])
    raise BodyError("body needs 'vertices', 'normals'/'offsets' or 'ellipsoid'")


def random_symmetric_polytope(dim, m, rng):
    """Convex hull of ``m`` random points and their reflections."""
    if dim == 2:
        t = np.sort(rng.uniform(0, np.pi, m))
        r = rng.uniform(0.7, 1.3, m)
        P = np.stack([r * np.cos(t), r * np.sin(t)], axis=1)
    else:
        P = rng.standard_normal((m, dim))
    return Polytope(np.vstack([P, -P]))
