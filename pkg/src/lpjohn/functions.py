"""Log-concave functions ``f = exp(-u)`` and their L_p Asplund calculus.

Potentials come in analytic variants (``Quadratic``, ``GaugePower``,
``Indicator``, ``PointMass``) with closed-form conjugates and masses, and a
sampled variant (``GridPotential``).  Module-level functions implement the
operations on :class:`LogConcaveFunction`.
"""

import math
import threading

import numpy as np
from scipy import ndimage
from scipy.special import gammaln

from . import numerics as nm
from .bodies import BodyError, ConvexBody, Ellipsoid, SupportBody, body_from_spec
from .numerics import DECAY_POTENTIAL, DecayError, Grid, NumericsError

Q_MIN, Q_MAX = 1.0, 8.0
GL_COND_MAX = 1e8


class FunctionError(ValueError):
    """Input is not a valid member of the class of log-concave functions used here."""


class InadmissibleError(ValueError):
    """A surface integral diverges for this (f, g, p) combination."""


# ------------------------------------------------------------------ potentials

class Potential:
    """Convex potential ``u`` with ``u(0) = 0``, ``u >= 0``."""

    dim: int
    smooth = True

    def value(self, x):
        raise NotImplementedError

    def conj(self, y):
        """``u*(y)``, i.e. the support function ``h_f``."""
        raise NotImplementedError

    def mass(self):
        raise NotImplementedError

    def entropy_mass(self):
        raise NotImplementedError

    def box_radius(self):
        """Half-width of a box on whose faces ``exp(-u) < 1e-12``."""
        raise NotImplementedError

    def growth(self):
        """Exponents ``(a, b)`` with ``u ~ |x|^a`` near 0 and ``u ~ |x|^b`` at infinity."""
        raise NotImplementedError

    def gradient_bound(self, R):
        """Bound on ``|grad u|_inf`` over ``[-R, R]^n``."""
        raise NotImplementedError

    def sample(self, R, N):
        return Grid.from_function(self.value, self.dim, R, N)

    def support_grid(self, Y, N):
        return Grid.from_function(self.conj, self.dim, Y, N)


class Quadratic(Potential):
    """``u(x) = x^T Q x / 2``."""

    kind = "gaussian"

    def __init__(self, Q):
        self.Q = nm.as_spd(Q)
        self.dim = self.Q.shape[0]
        self.Qinv = np.linalg.inv(self.Q)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", x, self.Q, x)

    def grad(self, x):
        return np.asarray(x, dtype=float) @ self.Q

    def conj(self, y):
        y = np.asarray(y, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", y, self.Qinv, y)

    def mass(self):
        return (2 * math.pi) ** (self.dim / 2) / math.sqrt(np.linalg.det(self.Q))

    def entropy_mass(self):
        return 0.5 * self.dim * self.mass()

    def box_radius(self):
        # min of x^T Q x / 2 on the face x_k = R is R^2 / (2 (Q^-1)_kk)
        return 1.02 * math.sqrt(2 * DECAY_POTENTIAL * float(np.max(np.diag(self.Qinv))))

    def growth(self):
        return 2.0, 2.0

    def gradient_bound(self, R):
        return R * float(np.max(np.sum(np.abs(self.Q), axis=1)))

    def body(self):
        return Ellipsoid(self.Q)

    q = 2.0

    def gl_image(self, T):
        return Quadratic(T.T @ self.Q @ T)

    def scaled(self, c):
        return Quadratic(self.Q / c)

    def polar(self):
        return Quadratic(self.Qinv)

    def is_even(self):
        return True

    def to_spec(self):
        return {"type": "gaussian", "Q": self.Q.tolist()}

    def __repr__(self):
        return f"Quadratic(Q={np.round(self.Q, 6).tolist()})"


class GaugePower(Potential):
    """``u(x) = ||x||_K^q / q`` for a convex body ``K`` with 0 in its interior."""

    kind = "gauge_power"

    def __init__(self, body, q):
        if not isinstance(body, ConvexBody) or isinstance(body, SupportBody):
            raise FunctionError("gauge-power potential needs a polytope or ellipsoid body")
        q = float(q)
        if not (Q_MIN < q <= Q_MAX):
            raise FunctionError(f"gauge exponent q must lie in (1, 8], got {q}")
        self.K = body
        self.q = q
        self.qc = q / (q - 1)
        self.dim = body.dim

    def value(self, x):
        return self.K.gauge(x) ** self.q / self.q

    def conj(self, y):
        return self.K.support(y) ** self.qc / self.qc

    def mass(self):
        n, q = self.dim, self.q
        return self.K.volume() * math.exp(gammaln(n / q + 1) + (n / q) * math.log(q))

    def entropy_mass(self):
        return self.dim * (1 - 1 / self.q) * self.mass()

    def box_radius(self):
        return 1.02 * self.K.coordinate_radius() * (self.q * DECAY_POTENTIAL) ** (1 / self.q)

    def growth(self):
        return self.q, self.q

    def gradient_bound(self, R):
        # |grad u|_inf <= max ||x||_K^(q-1) * max |grad ||.||_K|_inf; the gauge
        # is convex so its maximum over the box sits at a corner
        corners = R * np.array(np.meshgrid(*([[-1.0, 1.0]] * self.dim), indexing="ij")).reshape(self.dim, -1).T
        rho = float(np.max(self.K.gauge(corners)))
        return rho ** (self.q - 1) * self.K.polar().coordinate_radius()

    def body(self):
        return self.K

    def gl_image(self, T):
        return GaugePower(self.K.preimage(T), self.q)

    def scaled(self, c):
        # c u(x / c) = ||x||_{K'}^q / q with K' = c^(1/q') K
        return GaugePower(self.K.scaled(c ** (1 / self.qc)), self.q)

    def polar(self):
        return GaugePower(self.K.polar(), self.qc)

    def is_even(self):
        return self.K.is_symmetric()

    def to_spec(self):
        return {"type": "gauge_power", "body": self.K.to_spec(), "q": self.q}

    def __repr__(self):
        return f"GaugePower({self.K!r}, q={self.q:g})"


class Indicator(Potential):
    """``u = I_K`` (0 on K, +inf outside); used only in analytic identities."""

    kind = "indicator"
    smooth = False

    def __init__(self, body):
        self.K = body
        self.dim = body.dim

    def value(self, x):
        return np.where(self.K.contains(x), 0.0, nm.SENTINEL)

    def conj(self, y):
        return self.K.support(y)

    def mass(self):
        return self.K.volume()

    def entropy_mass(self):
        return self.dim * self.mass()

    def box_radius(self):
        return 1.25 * self.K.coordinate_radius()

    def growth(self):
        return math.inf, math.inf

    def gl_image(self, T):
        return Indicator(self.K.preimage(T))

    def scaled(self, c):
        return Indicator(self.K.scaled(c))

    def polar(self):
        raise FunctionError("the polar of an indicator is exp(-h_K), which is outside the supported families")

    def is_even(self):
        return self.K.is_symmetric()

    def __repr__(self):
        return f"Indicator({self.K!r})"


class PointMass(Potential):
    """``u = I_{0}``: the value of a sum with both coefficients zero."""

    kind = "point_mass"
    smooth = False

    def __init__(self, dim):
        self.dim = dim

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(np.all(x == 0, axis=-1), 0.0, nm.SENTINEL)

    def conj(self, y):
        return np.zeros(np.shape(y)[:-1])

    def mass(self):
        return 0.0

    def entropy_mass(self):
        return 0.0

    def gl_image(self, T):
        return self

    def scaled(self, c):
        return self

    def growth(self):
        return math.inf, math.inf

    def is_even(self):
        return True

    def __repr__(self):
        return f"PointMass(dim={self.dim})"


class GridPotential(Potential):
    """Potential sampled on a tensor grid; values outside the box are taken as +inf.

    ``support`` optionally supplies the conjugate on a dual grid (otherwise it
    is computed once, on first use, by the discrete transform).
    """

    kind = "grid"

    def __init__(self, grid, support=None, growth=None, validate=True, check_decay=True):
        self.grid = grid
        self.dim = grid.dim
        self._support = support
        self._growth = growth
        self._lock = threading.Lock()
        if validate:
            self._validate(check_decay)

    # -- construction helpers
    @classmethod
    def from_callable(cls, fn, dim, points_per_axis=None, growth=None, R0=1.0):
        """Sample ``fn`` on the smallest box (within 5%) whose faces satisfy decay.

        The box is doubled until the decay check passes, then bisected.
        """
        N = points_per_axis or nm.default_points(dim)

        def ok(R):
            return _face_min(fn, dim, R, N) > DECAY_POTENTIAL

        lo, hi = 0.0, R0
        for _ in range(40):
            if ok(hi):
                break
            lo, hi = hi, 2 * hi
        else:
            raise DecayError("potential does not reach the decay level on any box up to 2^40")
        while hi - lo > 0.05 * hi:
            mid = 0.5 * (lo + hi)
            lo, hi = (lo, mid) if ok(mid) else (mid, hi)
        return cls(Grid.from_function(fn, dim, hi, N), growth=growth)

    def _validate(self, check_decay):
        v = self.grid.values
        c = v[self.grid.center_index]
        if not abs(c) <= 1e-9:
            raise FunctionError(f"u(0) must be 0, got {c:.3g}")
        if np.nanmin(v) < -1e-9:
            raise FunctionError(f"u must be nonnegative, min is {np.nanmin(v):.3g}")
        if np.any(np.isnan(v)):
            raise FunctionError("potential has NaN entries")
        # midpoint convexity on random node triples
        rng = np.random.default_rng(0)
        N = self.grid.points_per_axis
        a = rng.integers(0, N, (1000, self.dim))
        b = rng.integers(0, N, (1000, self.dim))
        b = b - ((b - a) % 2)  # same parity so the midpoint is a node
        b = np.clip(b, 0, N - 1)
        m = (a + b) // 2
        ua, ub, um = v[tuple(a.T)], v[tuple(b.T)], v[tuple(m.T)]
        fin = np.isfinite(ua) & np.isfinite(ub)
        scale = 1e-9 * (1 + np.abs(ua) + np.abs(ub))
        bad = fin & (um > 0.5 * (ua + ub) + scale)
        if np.any(bad):
            raise FunctionError("potential fails the midpoint convexity test")
        if check_decay:
            nm.check_decay(self.grid.like(np.exp(-v)), what="exp(-u)")

    # -- potential interface
    def value(self, x):
        x = np.asarray(x, dtype=float)
        out = _interp(self.grid, x)
        return np.where(self.grid.inside(x), out, nm.SENTINEL)

    @property
    def support(self):
        with self._lock:
            if self._support is None:
                self._support = nm.legendre_transform(self.grid, refine=True)
            return self._support

    def conj(self, y):
        y = np.asarray(y, dtype=float)
        s = self.support
        if not np.all(s.inside(y)):
            raise nm.OutOfBoxError(
                f"support-function query outside the dual box of half-width {s.half_width:.4g}")
        return _interp(s, y)

    def mass(self):
        return nm.integrate(self.grid.like(np.exp(-self.grid.values)))

    def entropy_mass(self):
        v = self.grid.values
        f = np.exp(-v)
        uf = np.where(np.isfinite(v), v * f, 0.0)
        return self.dim * self.mass() - nm.integrate(self.grid.like(uf), check=False)

    def box_radius(self):
        return self.grid.half_width

    def growth(self):
        if self._growth is None:
            self._growth = _estimate_growth(self.grid)
        return self._growth

    def gradient_bound(self, R=None):
        return nm.gradient_range(self.grid)

    def gl_image(self, T):
        # new box: the preimage of the old box is inside T^{-1}[-R, R]^n
        Tinv = np.linalg.inv(T)
        R = self.grid.half_width * float(np.max(np.sum(np.abs(Tinv), axis=1)))
        # keep the spacing: a coarser origin cell would lose surface-measure mass
        N = 2 * math.ceil(R / self.grid.spacing) + 1
        ax = np.linspace(-R, R, N)
        mesh = np.stack(np.meshgrid(*([ax] * self.dim), indexing="ij"), axis=-1)
        vals = self.value(mesh @ T.T)
        vals = np.where(np.isfinite(vals), vals, nm.SENTINEL)
        vals[(N // 2,) * self.dim] = 0.0
        return GridPotential(Grid(self.dim, R, N, vals), growth=self._growth, validate=False)

    def scaled(self, c):
        g = self.grid
        sup = None
        if self._support is not None:
            sup = self._support.like(c * self._support.values)
        return GridPotential(Grid(g.dim, c * g.half_width, g.points_per_axis, c * g.values),
                             support=sup, growth=self._growth, validate=False)

    def polar(self):
        return GridPotential(_decay_box_transform(self.grid), support=self.grid,
                             growth=_conjugate_growth(self.growth()), validate=True)

    def is_even(self):
        v = self.grid.values
        flipped = v[(slice(None, None, -1),) * self.dim]
        fin = np.isfinite(v)
        return bool(np.all(np.abs(v[fin] - flipped[fin]) <= 1e-9 * (1 + np.abs(v[fin]))))

    def to_spec(self):
        g = self.grid
        return {"type": "grid", "grid": {"half_width": g.half_width, "points_per_axis": g.points_per_axis,
                                         "values": g.values.ravel().tolist()}}

    def __repr__(self):
        return f"GridPotential(dim={self.dim}, R={self.grid.half_width:g}, N={self.grid.points_per_axis})"


def _interp(grid, x):
    """Cubic-spline interpolation when all values are finite, multilinear otherwise."""
    x = np.asarray(x, dtype=float)
    shape = x.shape[:-1]
    coords = (x.reshape(-1, grid.dim).T + grid.half_width) / grid.spacing
    v = grid.values
    if np.all(np.isfinite(v)):
        out = ndimage.map_coordinates(v, coords, order=3, mode="nearest")
    else:
        filled = np.where(np.isfinite(v), v, np.nanmax(np.where(np.isfinite(v), v, np.nan)) * 1e3 + 1e3)
        out = ndimage.map_coordinates(filled, coords, order=1, mode="nearest")
        ninf = ndimage.map_coordinates(np.isfinite(v).astype(float), coords, order=1, mode="nearest")
        out = np.where(ninf > 1 - 1e-12, out, nm.SENTINEL)
    return out.reshape(shape)


def _face_min(fn, dim, R, N):
    """Minimum of ``fn`` over the faces of ``[-R, R]^dim`` sampled with N points per axis."""
    ax = np.linspace(-R, R, N)
    best = math.inf
    for k in range(dim):
        for s in (-R, R):
            axes = [ax] * dim
            axes[k] = np.array([s])
            mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
            best = min(best, float(np.min(fn(mesh))))
    return best


def _estimate_growth(grid):
    """Log-log slopes of ``u`` along coordinate and diagonal rays."""
    dirs = nm.fibonacci_directions(grid.dim, 16 if grid.dim > 1 else 2)
    R = grid.half_width
    h = grid.spacing

    def slope(r1, r2):
        u1 = _interp(grid, dirs * r1)
        u2 = _interp(grid, dirs * r2)
        ok = (u1 > 0) & np.isfinite(u2)
        return float(np.median(np.log(u2[ok] / u1[ok]) / math.log(r2 / r1)))

    return slope(6 * h, 12 * h), slope(0.45 * R, 0.9 * R)


def _conjugate_growth(ab):
    a, b = ab
    return a / (a - 1), b / (b - 1)


def _decay_box_transform(grid, N=None):
    """Conjugate a grid potential onto a box on whose faces ``exp(-u*)`` decays.

    A coarse pass over a generous box locates the decay radius, a fine pass
    transforms onto it.
    """
    N = N or grid.points_per_axis
    Y = 1.1 * nm.gradient_range(grid)
    coarse = nm.conjugate_onto(grid, Y, 65, refine=True)
    ax = coarse.axis
    below = np.all(coarse.values <= DECAY_POTENTIAL, axis=None)
    if below:
        raise DecayError("conjugate does not reach the decay level inside the gradient range")
    # smallest box whose faces all lie where u* > L
    for R in np.linspace(ax[-1] / 16, ax[-1], 61):
        if _face_min(lambda y: _interp(coarse, y), grid.dim, R, 65) > DECAY_POTENTIAL * 1.05:
            break
    else:
        raise DecayError("conjugate does not reach the decay level on its dual box")
    return nm.conjugate_onto(grid, R, N, refine=True)


# ------------------------------------------------------------ function object

class LogConcaveFunction:
    """``f = exp(-u)`` for a potential ``u``.  Immutable."""

    def __init__(self, potential, name=None):
        if not isinstance(potential, Potential):
            raise FunctionError("expected a Potential")
        self.potential = potential
        self.name = name or repr(potential)

    @property
    def dim(self):
        return self.potential.dim

    def __call__(self, x):
        return np.exp(-self.potential.value(x))

    def __repr__(self):
        return f"LogConcaveFunction({self.name})"


def gaussian(Q, name=None):
    """``gamma_Q(x) = exp(-x^T Q x / 2)``."""
    return LogConcaveFunction(Quadratic(Q), name)


def gauge_power(body, q, name=None):
    return LogConcaveFunction(GaugePower(body, q), name)


def indicator(body, name=None):
    return LogConcaveFunction(Indicator(body), name)


def grid_function(grid, name=None, **kw):
    return LogConcaveFunction(GridPotential(grid, **kw), name)


def _pot(f):
    return f.potential if isinstance(f, LogConcaveFunction) else f


def support_function(f, y):
    """``h_f(y) = u*(y)``."""
    return _pot(f).conj(y)


def gl_image(f, T):
    """The function ``x -> f(T x)``."""
    T = np.atleast_2d(np.asarray(T, dtype=float))
    if T.shape != (f.dim, f.dim):
        raise FunctionError(f"T must be {f.dim}x{f.dim}")
    c = np.linalg.cond(T)
    if not c <= GL_COND_MAX:
        raise FunctionError(f"T is near-singular (condition number {c:.3g})")
    return LogConcaveFunction(_pot(f).gl_image(T))


def polar(f):
    """``f° = exp(-u*)``."""
    return LogConcaveFunction(_pot(f).polar())


def lp_scalar_mult(lam, f, p):
    """``lam ._p f``: the function whose support function is ``lam^(1/p) h_f``."""
    if not lam > 0:
        raise FunctionError("scalar must be positive")
    if not p >= 1:
        raise FunctionError("p must be >= 1")
    c = lam ** (1.0 / p)
    if c == 1.0:
        return f
    return LogConcaveFunction(_pot(f).scaled(c))


def total_mass(f, method="auto", points_per_axis=None):
    """``J(f) = int f``: closed form when available, otherwise (or with
    ``method="grid"``) tensor trapezoid on a decay box."""
    u = _pot(f)
    if method == "auto" or isinstance(u, (GridPotential, Indicator, PointMass)):
        return float(u.mass())
    g = u.sample(u.box_radius(), points_per_axis or nm.default_points(u.dim))
    return nm.integrate(g.like(np.exp(-g.values)))


def entropy_mass(f, method="auto", points_per_axis=None):
    """``J(f^◇) = n J(f) - int u exp(-u)``."""
    u = _pot(f)
    if method == "auto" or isinstance(u, (GridPotential, Indicator, PointMass)):
        return float(u.entropy_mass())
    g = u.sample(u.box_radius(), points_per_axis or nm.default_points(u.dim))
    e = np.exp(-g.values)
    J = nm.integrate(g.like(e))
    return u.dim * J - nm.integrate(g.like(g.values * e), check=False)


def lp_asplund_sum(f, g, alpha, beta, p, box=None, points_per_axis=None, dual_points=None):
    """``alpha ._p f (+)_p beta ._p g`` through its support function.

    Builds ``h = (alpha h_f^p + beta h_g^p)^(1/p)`` on a dual grid and
    conjugates back to a grid potential.  Two indicators give the indicator
    of the L_p sum of the bodies (analytic path).
    """
    if alpha < 0 or beta < 0:
        raise FunctionError("coefficients must be nonnegative")
    if not p >= 1:
        raise FunctionError("p must be >= 1")
    if f.dim != g.dim:
        raise FunctionError("dimension mismatch")
    n = f.dim
    if alpha == 0 and beta == 0:
        return LogConcaveFunction(PointMass(n))
    uf, ug = _pot(f), _pot(g)
    if isinstance(uf, Indicator) and isinstance(ug, Indicator) and box is None:
        K, L = uf.K, ug.K

        def h(y):
            return (alpha * K.support(y) ** p + beta * L.support(y) ** p) ** (1.0 / p)
        return LogConcaveFunction(Indicator(SupportBody(n, h)))
    grid = sum_support_grid(f, g, alpha, beta, p, box=box, points_per_axis=points_per_axis,
                            dual_points=dual_points)
    return LogConcaveFunction(GridPotential(grid.primal, support=grid.dual, validate=False))


class _SumGrids:
    def __init__(self, primal, dual):
        self.primal, self.dual = primal, dual


def _support_on(u, Y, N):
    if isinstance(u, GridPotential):
        s = u.support
        if Y <= s.half_width * (1 + 1e-12):
            ax = np.linspace(-Y, Y, N)
            mesh = np.stack(np.meshgrid(*([ax] * u.dim), indexing="ij"), axis=-1)
            return Grid(u.dim, Y, N, _interp(s, mesh))
        raise nm.OutOfBoxError("requested dual box exceeds the stored support grid")
    return u.support_grid(Y, N)


def sum_support_grid(f, g, alpha, beta, p, box=None, points_per_axis=None, dual_points=None):
    """Primal and dual grids of the L_p sum (see :func:`lp_asplund_sum`)."""
    uf, ug = _pot(f), _pot(g)
    n = uf.dim
    N = points_per_axis or nm.default_points(n)
    Nd = dual_points or N
    terms = [(c, u) for c, u in ((alpha, uf), (beta, ug)) if c > 0]
    if box is None:
        box = sum(c ** (1 / p) * u.box_radius() for c, u in terms)
    R = box
    grids = [u for _, u in terms if isinstance(u, GridPotential)]
    if grids:
        # sampled support functions are only known on their own dual boxes
        Y = min(u.support.half_width for u in grids)
    else:
        Y = 1.1 * max(u.gradient_bound(R) for _, u in terms)
    acc = None
    for c, u in terms:
        hv = _support_on(u, Y, Nd).values
        term = c * hv ** p
        acc = term if acc is None else acc + term
    dual = Grid(n, Y, Nd, acc ** (1.0 / p))
    primal = nm.conjugate_onto(dual, R, N, refine=True)
    return _SumGrids(primal, dual)


# ---------------------------------------------------------------- spec I/O

def from_spec(spec):
    """Build a :class:`LogConcaveFunction` from a function-spec document."""
    if not isinstance(spec, dict) or "type" not in spec:
        raise FunctionError("function spec must be an object with a 'type' field")
    t = spec["type"]
    try:
        if t == "gaussian":
            if "Q" not in spec:
                raise FunctionError("gaussian spec needs 'Q'")
            Q = np.asarray(spec["Q"], dtype=float)
            if Q.ndim == 1:
                m = int(round(math.sqrt(Q.size)))
                Q = Q.reshape(m, m)
            return LogConcaveFunction(Quadratic(Q), spec.get("name"))
        if t == "gauge_power":
            if "body" not in spec or "q" not in spec:
                raise FunctionError("gauge_power spec needs 'body' and 'q'")
            return LogConcaveFunction(GaugePower(body_from_spec(spec["body"]), float(spec["q"])),
                                      spec.get("name"))
        if t == "grid":
            gs = spec.get("grid")
            if not isinstance(gs, dict):
                raise FunctionError("grid spec needs a 'grid' object")
            N = int(gs["points_per_axis"])
            vals = np.asarray(gs["values"], dtype=float)
            dim = int(round(math.log(vals.size) / math.log(N))) if vals.size > 1 else 1
            return LogConcaveFunction(GridPotential(Grid(dim, float(gs["half_width"]), N, vals)),
                                      spec.get("name"))
    except (nm.NotSPDError, BodyError, NumericsError, KeyError, TypeError) as exc:
        raise FunctionError(f"{type(exc).__name__}: {exc}") from None
    raise FunctionError(f"unknown function type {t!r}")


def to_spec(f):
    return _pot(f).to_spec()
