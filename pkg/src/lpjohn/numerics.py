"""Grids, quadrature, discrete Legendre transforms and SPD helpers (n <= 3)."""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .kernels import legendre_lines

#: Reserved value for ``+inf`` entries (indicator-like potentials).
SENTINEL = np.inf

#: ``-log`` of the decay level required at the edge of an integration box.
DECAY_LEVEL = 1e-12
DECAY_POTENTIAL = -math.log(DECAY_LEVEL)

DEFAULT_POINTS = {1: 513, 2: 129, 3: 65}


class NumericsError(ValueError):
    """Base class for numerical precondition failures."""


class DecayError(NumericsError):
    """Integrand or potential does not decay at the edge of its box."""


class NotSPDError(NumericsError):
    pass


class OutOfBoxError(NumericsError):
    pass


def default_points(dim):
    return DEFAULT_POINTS[dim]


@dataclass(frozen=True, eq=False)
class Grid:
    """Values sampled on the tensor grid ``[-R, R]^dim`` with an odd number of nodes.

    ``values`` has shape ``(points_per_axis,) * dim``; axis ``k`` of the array
    corresponds to coordinate ``x_k``.
    """

    dim: int
    half_width: float
    points_per_axis: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise NumericsError(f"dimension must be 1, 2 or 3, got {self.dim}")
        if self.points_per_axis < 33 or self.points_per_axis % 2 == 0:
            raise NumericsError("points_per_axis must be an odd integer >= 33")
        if not self.half_width > 0:
            raise NumericsError("half_width must be positive")
        vals = np.asarray(self.values, dtype=float)
        shape = (self.points_per_axis,) * self.dim
        if vals.size != math.prod(shape):
            raise NumericsError(f"expected {math.prod(shape)} values, got {vals.size}")
        vals = vals.reshape(shape)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def spacing(self):
        return 2.0 * self.half_width / (self.points_per_axis - 1)

    @property
    def axis(self):
        return np.linspace(-self.half_width, self.half_width, self.points_per_axis)

    @property
    def center_index(self):
        return (self.points_per_axis // 2,) * self.dim

    def nodes(self):
        """Node coordinates, shape ``(N,)*dim + (dim,)``."""
        ax = self.axis
        mesh = np.meshgrid(*([ax] * self.dim), indexing="ij")
        return np.stack(mesh, axis=-1)

    def like(self, values, half_width=None):
        return Grid(self.dim, self.half_width if half_width is None else half_width,
                    self.points_per_axis, values)

    @classmethod
    def from_function(cls, fn, dim, half_width, points_per_axis):
        """Sample ``fn`` (vectorised over the last axis) on a fresh grid."""
        ax = np.linspace(-half_width, half_width, points_per_axis)
        mesh = np.stack(np.meshgrid(*([ax] * dim), indexing="ij"), axis=-1)
        return cls(dim, half_width, points_per_axis, fn(mesh))

    def interpolator(self, fill=np.nan):
        ax = self.axis
        return RegularGridInterpolator((ax,) * self.dim, self.values, method="linear",
                                       bounds_error=False, fill_value=fill)

    def inside(self, x, strict=False):
        x = np.asarray(x, dtype=float)
        r = np.max(np.abs(x), axis=-1)
        return r < self.half_width if strict else r <= self.half_width * (1 + 1e-12)

    def __call__(self, x):
        """Multilinear interpolation at points ``x`` (shape ``(..., dim)``)."""
        x = np.asarray(x, dtype=float)
        if not np.all(self.inside(x)):
            raise OutOfBoxError("query point outside the grid box")
        return self.interpolator()(x)


# ---------------------------------------------------------------- quadrature

def trapezoid_weights(grid):
    """Tensor-product trapezoid weights (cell volumes) on the grid nodes."""
    w1 = np.full(grid.points_per_axis, grid.spacing)
    w1[0] = w1[-1] = grid.spacing / 2
    w = w1
    for _ in range(grid.dim - 1):
        w = np.multiply.outer(w, w1)
    return w


def boundary_faces(grid):
    """Yield ``(axis, side, face_values)`` for the 2*dim faces of the box."""
    vals = grid.values
    for ax in range(grid.dim):
        for side, idx in (("-", 0), ("+", -1)):
            yield ax, side, np.take(vals, idx, axis=ax)


def check_decay(grid, level=DECAY_LEVEL, what="integrand"):
    for ax, side, face in boundary_faces(grid):
        m = float(np.max(np.abs(face)))
        if m > level:
            raise DecayError(
                f"{what} is {m:.3g} on face x{ax + 1} = {side}{grid.half_width:g} "
                f"(needs < {level:g})")


def integrate(grid, check=True):
    """Tensor-product trapezoid integral of node values over the box."""
    if check:
        check_decay(grid)
    vals = np.where(np.isfinite(grid.values), grid.values, 0.0)
    return float(np.sum(vals * trapezoid_weights(grid)))


# ----------------------------------------------------------------- gradients

def node_gradients(grid, order=2):
    """Central-difference gradient at every node, shape ``(N,)*dim + (dim,)``.

    ``order=4`` uses the five-point stencil in the interior and falls back to
    second order within two nodes of the edge.
    """
    h = grid.spacing
    vals = grid.values
    comps = []
    for ax in range(grid.dim):
        with np.errstate(invalid="ignore"):  # stencils touching +inf give NaN
            g = np.gradient(vals, h, axis=ax, edge_order=2)
        if order == 4:
            v = np.moveaxis(vals, ax, 0)
            g4 = np.moveaxis(g, ax, 0).copy()
            with np.errstate(invalid="ignore"):
                g4[2:-2] = (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / (12 * h)
            g = np.moveaxis(g4, 0, ax)
        comps.append(g)
    return np.stack(comps, axis=-1)


def gradient(u, x, order=2):
    """Gradient of the grid potential ``u`` at ``x``: central differences at the
    nodes, multilinear interpolation in between."""
    x = np.asarray(x, dtype=float)
    if not np.all(u.inside(x, strict=True)):
        raise OutOfBoxError(f"gradient query {x} outside the open box of half-width {u.half_width}")
    g = node_gradients(u, order=order)
    ax = u.axis
    out = []
    for k in range(u.dim):
        out.append(RegularGridInterpolator((ax,) * u.dim, g[..., k], method="linear")(x))
    return np.stack(out, axis=-1)


# ---------------------------------------------------------- Legendre transform

def _transform(values, src_axis, dst_axis, refine=False):
    """Discrete conjugate ``out(y) = max_x <x, y> - values(x)`` between tensor grids.

    Factored into 1-D passes: the supremum over a product set is taken one
    coordinate at a time, last coordinate first.
    """
    g = np.asarray(values, dtype=float)
    dim = g.ndim
    for k, ax in enumerate(reversed(range(dim))):
        h = g if k == 0 else -g
        moved = np.moveaxis(h, ax, -1)
        lead = moved.shape[:-1]
        res = legendre_lines(np.ascontiguousarray(moved.reshape(-1, moved.shape[-1])),
                             src_axis, dst_axis, refine)
        g = np.moveaxis(res.reshape(lead + (dst_axis.size,)), -1, ax)
    return g


def gradient_range(u):
    """Largest absolute one-sided difference quotient across the box faces.

    For a convex potential the gradient is largest at the boundary, so this
    bounds the range of ``grad u`` over the box.
    """
    h = u.spacing
    best = 0.0
    vals = u.values
    for ax in range(u.dim):
        v = np.moveaxis(vals, ax, 0)
        for d in (v[1] - v[0], v[-1] - v[-2]):
            d = d[np.isfinite(d)]
            if d.size:
                best = max(best, float(np.max(np.abs(d))) / h)
    return best


def legendre_transform(u, dual_half_width=None, points_per_axis=None, refine=False):
    """Discrete Legendre-Fenchel transform of a grid potential.

    The dual box defaults to the gradient range of ``u`` padded by 10%.
    Without ``refine`` the result is exactly a supremum of affine functions
    (convex, order reversing); ``refine`` adds a parabolic sub-grid correction
    that lowers the error from second to third order for smooth ``u``.
    """
    finite = u.values[np.isfinite(u.values)]
    if finite.size == 0:
        raise NumericsError("potential is +inf everywhere")
    if not (np.max(u.values) - np.min(finite) >= 1.0):
        raise NumericsError("potential never exceeds its minimum by 1; gradient range is degenerate")
    if dual_half_width is None:
        dual_half_width = 1.1 * gradient_range(u)
        if not dual_half_width > 0:
            dual_half_width = u.half_width
    n_out = points_per_axis or u.points_per_axis
    dst = np.linspace(-dual_half_width, dual_half_width, n_out)
    vals = _transform(u.values, u.axis, dst, refine)
    return Grid(u.dim, dual_half_width, n_out, vals)


def conjugate_onto(u, target_half_width, points_per_axis=None, refine=False):
    """Conjugate ``u`` onto an explicitly chosen box (used for double transforms)."""
    n_out = points_per_axis or u.points_per_axis
    dst = np.linspace(-target_half_width, target_half_width, n_out)
    return Grid(u.dim, target_half_width, n_out, _transform(u.values, u.axis, dst, refine))


def double_conjugate_check(u, margin=1):
    """Max ``|u** - u|`` over nodes at least ``margin`` nodes from the edge."""
    ustar = legendre_transform(u)
    back = conjugate_onto(ustar, u.half_width, u.points_per_axis)
    sl = (slice(margin, -margin),) * u.dim
    a, b = back.values[sl], u.values[sl]
    ok = np.isfinite(b)
    return float(np.max(np.abs(a[ok] - b[ok])))


# ------------------------------------------------------------------ SPD tools

def as_spd(Q, tol=1e-12):
    """Symmetrise ``Q`` and check positive definiteness; returns a float array."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.shape[0] != Q.shape[1]:
        raise NotSPDError(f"matrix must be square, got shape {Q.shape}")
    if not np.all(np.isfinite(Q)):
        raise NotSPDError("matrix has non-finite entries")
    asym = np.max(np.abs(Q - Q.T)) if Q.size else 0.0
    scale = max(1.0, float(np.max(np.abs(Q))))
    if asym > 1e-8 * scale:
        raise NotSPDError(f"matrix is not symmetric (asymmetry {asym:.3g})")
    Q = 0.5 * (Q + Q.T)
    w = np.linalg.eigvalsh(Q)
    if not w[0] > tol * max(1.0, w[-1]):
        raise NotSPDError(f"matrix is not positive definite (smallest eigenvalue {w[0]:.3g})")
    return Q


def spd_normalize_det(Q):
    """Return ``Q / det(Q)^(1/n)`` (determinant one)."""
    Q = as_spd(Q)
    sign, logdet = np.linalg.slogdet(Q)
    out = Q * math.exp(-logdet / Q.shape[0])
    # one polishing pass so det is 1 to rounding
    sign, logdet = np.linalg.slogdet(out)
    return out * math.exp(-logdet / Q.shape[0])


def spd_sqrt(Q):
    w, V = np.linalg.eigh(as_spd(Q))
    return (V * np.sqrt(w)) @ V.T


def spd_power(Q, a):
    w, V = np.linalg.eigh(as_spd(Q))
    return (V * w**a) @ V.T


def op_norm(A):
    return float(np.linalg.norm(np.atleast_2d(A), 2))


def random_spd(dim, rng, det=None, spread=1.0):
    """A random SPD matrix with log-eigenvalues uniform in ``[-spread, spread]``."""
    A = rng.standard_normal((dim, dim))
    O, _ = np.linalg.qr(A)
    w = np.exp(rng.uniform(-spread, spread, dim))
    Q = (O * w) @ O.T
    Q = 0.5 * (Q + Q.T)
    if det is not None:
        Q = spd_normalize_det(Q) * det ** (1.0 / dim)
    return Q


def fibonacci_directions(dim, m):
    """Roughly uniform unit vectors: equispaced angles (n=2), Fibonacci lattice (n=3)."""
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        t = 2 * np.pi * np.arange(m) / m
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    i = np.arange(m) + 0.5
    z = 1 - 2 * i / m
    phi = np.pi * (1 + 5**0.5) * i
    r = np.sqrt(1 - z * z)
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def sphere_quadrature(dim, resolution=None):
    """Nodes and weights on the unit sphere S^(dim-1); weights sum to its area.

    n=1: the two points +-1.  n=2: equispaced angles (trapezoid, spectrally
    accurate for smooth periodic integrands).  n=3: Gauss-Legendre in the
    polar cosine times equispaced azimuths.
    """
    if dim == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if dim == 2:
        m = resolution or 128
        t = 2 * np.pi * (np.arange(m) + 0.5) / m
        return np.stack([np.cos(t), np.sin(t)], axis=1), np.full(m, 2 * np.pi / m)
    k = resolution or 40
    m = 2 * k
    c, wc = np.polynomial.legendre.leggauss(k)
    phi = 2 * np.pi * (np.arange(m) + 0.5) / m
    s = np.sqrt(1 - c * c)
    pts = np.stack([np.outer(s, np.cos(phi)), np.outer(s, np.sin(phi)),
                    np.outer(c, np.ones(m))], axis=-1).reshape(-1, 3)
    w = np.outer(wc, np.full(m, 2 * np.pi / m)).ravel()
    return pts, w


def unit_ball_volume(dim):
    return math.pi ** (dim / 2) / math.gamma(dim / 2 + 1)
