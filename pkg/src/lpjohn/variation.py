"""Surface measures, first variations and their normalised forms.

The L_p surface measure of ``f = exp(-u)`` is discretised as a weighted point
cloud ``{(z_i, hf_i, w_i)}`` with ``z_i = grad u(x_i)``,
``hf_i = h_f(z_i) = <x_i, z_i> - u(x_i)`` and ``w_i`` the f-mass of the cell,
so that ``int g dmu_p(f) ~ sum_i w_i g(z_i) hf_i^(1-p)``.
"""

from dataclasses import asdict, dataclass, field
import math

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp

from . import numerics as nm
from .functions import (FunctionError, GaugePower, GridPotential, InadmissibleError,
                        Quadratic, _pot, sum_support_grid)

EPS_H = 1e-8
EXCLUDED_FRACTION = 1e-3
P_MAX = 32.0


class ExcludedMassError(nm.NumericsError):
    """Too much f-mass sits in cells where h_f is below the exclusion threshold."""


@dataclass(frozen=True, eq=False)
class WeightedPointCloud:
    """Discretised surface measure: gradient points, ``h_f`` there, cell f-masses."""

    z: np.ndarray
    hf: np.ndarray
    weight: np.ndarray
    excluded_mass: float = 0.0
    kind: str = "ray"
    #: unit-gauge ray directions (ray clouds only); p = inf constraints use them
    directions: np.ndarray = field(default=None, repr=False)

    def __len__(self):
        return len(self.weight)

    @property
    def dim(self):
        return self.z.shape[1]

    @property
    def total_weight(self):
        return float(np.sum(self.weight))

    @property
    def entropy_mass(self):
        """``sum w hf``: the cloud's own value of ``J(f^◇)``."""
        return float(np.sum(self.weight * self.hf))

    def log_density(self, p):
        """``log(w hf^(1-p))``, the log-weights of ``mu_p``."""
        lw = np.log(self.weight)
        return lw if p == 1 else lw + (1.0 - p) * np.log(self.hf)

    def restrict(self, mask):
        return WeightedPointCloud(self.z[mask], self.hf[mask], self.weight[mask],
                                  self.excluded_mass, self.kind, self.directions)


@dataclass
class VariationReport:
    p: float
    delta_Jp: float
    normalized: float
    entropy_mass_used: float
    cloud_size: int
    excluded_mass: float

    def to_dict(self):
        d = asdict(self)
        if math.isinf(self.p):
            d["p"] = "inf"
            d["delta_Jp"] = None
        return d


# --------------------------------------------------------------- admissibility

def admissible(f, p, g_growth=2.0):
    """Whether ``int h_g^p dmu_p(f)`` converges near the origin.

    With ``u ~ |x|^a`` near 0 and ``h_g ~ |z|^(b')`` there (``b`` the near-0
    growth of g's potential, ``b' = b/(b-1)``), the integrand behaves like
    ``r^(p((a-1)b' - a) + a + n - 1)``.
    """
    if math.isinf(p):
        return admissible_infinity(f, g_growth)
    a = _pot(f).growth()[0]
    n = f.dim
    bc = g_growth / (g_growth - 1.0)
    return p * ((a - 1.0) * bc - a) + a + n > 1e-9


def admissible_infinity(f, g_growth=2.0, tol=0.35):
    """``sup h_g / h_f < inf`` for ``h_g ~ |z|^(b')`` at both ends."""
    a, b = _pot(f).growth()
    bc = g_growth / (g_growth - 1.0)
    ac, bbc = a / (a - 1.0), b / (b - 1.0)
    return ac <= bc + tol * 0.5 and bbc >= bc - tol * 0.5


# --------------------------------------------------------------------- clouds

def surface_cloud(f, p=1.0, resolution=None, eps_h=EPS_H, method="auto"):
    """Quadrature discretisation of ``mu_p(f, .)``.

    Analytic potentials use exact ray quadrature: along every ray of a cone
    decomposition (polytopes) or of a whitened sphere rule (ellipsoids and
    Gaussians) the radial integral is a trapezoid rule in ``log r``.
    Grid potentials use one point per grid node with fourth-order central
    difference gradients.  For ``p > 1`` nodes with ``hf < eps_h`` are dropped
    and their f-mass is reported as ``excluded_mass``.
    """
    if not p >= 1:
        raise ValueError("p must be >= 1")
    u = _pot(f)
    if not getattr(u, "smooth", False):
        raise FunctionError(f"{type(u).__name__} potential has no gradient; no surface measure")
    if method == "grid" or isinstance(u, GridPotential):
        if isinstance(u, GridPotential):
            grid = u.grid
        else:
            grid = u.sample(u.box_radius(), resolution or nm.default_points(u.dim))
        return _grid_cloud(grid, p, eps_h, total=u.mass())
    if isinstance(u, (Quadratic, GaugePower)):
        return _ray_cloud(u, p, resolution)
    raise FunctionError(f"no surface cloud for {type(u).__name__}")


def _radial_nodes(q, n, p):
    """Log-radial nodes and step covering the bulk of ``exp(-r^q/q) r^k``."""
    # k bounds the radial power once h_g^p hf^(1-p) (h_g of degree 2) is included
    k = n + max(0.0, p * (q - 2.0)) + q
    step = 0.4 / math.sqrt(q * k)
    s_hi = 150.0 + 3.0 * k / q
    lo_exp = p * (q - 2.0) + q + n  # integrand ~ r^(lo_exp - 1) near 0
    r_lo = min((q * 1e-14) ** (1.0 / q), 1e-14 ** (1.0 / n))
    if lo_exp > 0:
        r_lo = min(r_lo, 1e-12 ** (1.0 / lo_exp))
    sig_lo, sig_hi = math.log(r_lo), math.log(q * s_hi) / q
    m = int(math.ceil((sig_hi - sig_lo) / step))
    sig = sig_lo + step * np.arange(m + 1)
    return sig, step, r_lo


def _ray_cloud(u, p, resolution):
    q = float(u.q)
    n = u.dim
    body = u.body()
    a, c, xdir = body.ray_data(resolution)
    sig, step, r_lo = _radial_nodes(q, n, min(p, P_MAX))
    r = np.exp(sig)
    s = r**q / q
    radial_w = np.exp(-s) * r**n * step
    z = (r[None, :, None] ** (q - 1.0)) * a[:, None, :]
    hf = np.broadcast_to((q - 1.0) * s, (len(a), len(r)))
    w = c[:, None] * radial_w[None, :]
    excluded = float(np.sum(c) * r_lo**n / n)
    return WeightedPointCloud(z.reshape(-1, n), np.ascontiguousarray(hf).ravel(), w.ravel(),
                              excluded, "ray", a)


def _grid_cloud(grid, p, eps_h, total):
    vals = grid.values
    grad = nm.node_gradients(grid, order=4)
    X = grid.nodes()
    with np.errstate(invalid="ignore"):
        hf = np.sum(X * grad, axis=-1) - vals
    w = np.exp(-vals) * nm.trapezoid_weights(grid)
    ok = np.isfinite(vals) & np.all(np.isfinite(grad), axis=-1) & np.isfinite(hf) & (w > 0)
    # a stencil that touches +inf gives a meaningless gradient
    if not np.all(np.isfinite(vals)):
        near = np.isfinite(vals)
        for ax in range(grid.dim):
            for sh in (-2, -1, 1, 2):
                near &= np.isfinite(np.roll(vals, sh, axis=ax))
        ok &= near
    excluded = 0.0
    if p > 1:
        small = ok & (hf < eps_h)
        excluded = float(np.sum(w[small]))
        ok &= hf >= eps_h
        if excluded > EXCLUDED_FRACTION * total:
            raise ExcludedMassError(
                f"excluded mass {excluded:.3g} exceeds {EXCLUDED_FRACTION:g} * J(f) = "
                f"{EXCLUDED_FRACTION * total:.3g}; refine the grid")
    else:
        hf = np.maximum(hf, 0.0)
    return WeightedPointCloud(grad[ok], hf[ok], w[ok], excluded, "grid")


# ----------------------------------------------------------------- variations

def _hg_on_cloud(f, g, cloud):
    if g is f:
        return cloud.hf
    return np.asarray(_pot(g).conj(cloud.z), dtype=float)


def _log_moment(cloud, hg, p):
    with np.errstate(divide="ignore"):
        return logsumexp(cloud.log_density(p) + p * np.log(hg))


def lp_first_variation(f, g, p, cloud=None, resolution=None):
    """``delta J_p(f, g) = (1/p) int h_g^p dmu_p(f)`` and its normalised form.

    ``p = inf`` returns the sup-ratio (``delta_Jp`` is then NaN).
    """
    if math.isinf(p):
        sup = sup_ratio_variation(f, g)
        return VariationReport(math.inf, math.nan, sup, math.nan, 0, 0.0)
    if not 1 <= p <= P_MAX:
        raise ValueError(f"finite p must lie in [1, {P_MAX:g}]")
    gg = _pot(g).growth()[0] if g is not f else None
    if g is not f and math.isfinite(gg) and not admissible(f, p, gg):
        raise InadmissibleError(f"int h_g^p dmu_p(f) diverges at the origin for p = {p:g}")
    if cloud is None:
        cloud = surface_cloud(f, p, resolution)
    hg = _hg_on_cloud(f, g, cloud)
    if np.any(hg < 0) or not np.all(np.isfinite(hg)):
        raise FunctionError("h_g is negative or not finite on the cloud")
    E = cloud.entropy_mass
    lm = _log_moment(cloud, hg, p)
    delta = math.exp(lm) / p
    normalized = math.exp((lm - math.log(E)) / p)
    return VariationReport(float(p), delta, normalized, E, len(cloud), cloud.excluded_mass)


def normalized_variation(f, g, p, cloud=None):
    return lp_first_variation(f, g, p, cloud).normalized


def _ray_limits(u, omega):
    """Radii along ``omega`` where a support function can be evaluated."""
    if isinstance(u, GridPotential):
        Y = u.support.half_width
        h = u.support.spacing
        # the dual box pads the gradient range by 10%; beyond it the maximiser
        # leaves the primal box and the sampled conjugate is truncated
        return 4 * h / np.max(np.abs(omega)), 0.9 * Y / np.max(np.abs(omega))
    return 1e-4, 1e4


def unbounded_ratio(uf, ug):
    """Reason why ``h_g / h_f`` is unbounded, from growth exponents, or ``None``."""
    af, bf = uf.growth()
    ag, bg = ug.growth()
    afc, bfc = af / (af - 1), bf / (bf - 1)
    agc, bgc = ag / (ag - 1), bg / (bg - 1)
    tol = 0.175 if isinstance(uf, GridPotential) or isinstance(ug, GridPotential) else 1e-9
    if agc < afc - tol:
        return "ratio grows without bound at the origin"
    if bgc > bfc + tol:
        return "ratio grows without bound at infinity"
    return None


def ray_max(uf, ug, om, samples=96):
    """``max_r h_g(r om) / h_f(r om)`` by a log-radial scan and bounded polish.

    Returns ``(value, extrapolated)``.  A maximum at the outer end of a sampled
    dual box is extrapolated assuming the ratio approaches its limit like
    ``C / r^2``.
    """
    lo1, hi1 = _ray_limits(uf, om)
    lo2, hi2 = _ray_limits(ug, om)
    lo, hi = max(lo1, lo2), min(hi1, hi2)
    rs = np.geomspace(lo, hi, samples)
    Y = rs[:, None] * om[None, :]
    ratio = ug.conj(Y) / uf.conj(Y)
    k = int(np.argmax(ratio))
    val = float(ratio[k])
    if 0 < k < len(rs) - 1:
        def neg(t):
            y = math.exp(t) * om
            return -float(ug.conj(y) / uf.conj(y))
        res = minimize_scalar(neg, bounds=(math.log(rs[k - 1]), math.log(rs[k + 1])),
                              method="bounded", options={"xatol": 1e-10})
        return max(val, -float(res.fun)), False
    if k == len(rs) - 1 and (isinstance(uf, GridPotential) or isinstance(ug, GridPotential)):
        r2 = rs[-1] / 2
        v2 = float(ug.conj(r2 * om) / uf.conj(r2 * om))
        return max(val, (4 * val - v2) / 3), True
    return val, False


def sup_ratio_variation(f, g, directions=None, diagnostics=None):
    """``sup_y h_g(y) / h_f(y)`` over sampled directions and radii.

    If the growth exponents at 0 or infinity make the ratio unbounded, ``inf``
    is returned and the reason is stored in ``diagnostics["unbounded"]``.
    """
    uf, ug = _pot(f), _pot(g)
    diag = diagnostics if diagnostics is not None else {}
    if g is f:
        return 1.0
    reason = unbounded_ratio(uf, ug)
    if reason:
        diag["unbounded"] = reason
        return math.inf
    if directions is None:
        directions = nm.fibonacci_directions(f.dim, {1: 2, 2: 256, 3: 1024}[f.dim])
    best, extrapolated = 0.0, False
    for om in directions:
        val, ex = ray_max(uf, ug, om)
        best = max(best, val)
        extrapolated |= ex
    diag["extrapolated"] = extrapolated
    return best


def lipschitz_diagnostic(f, g, g0, p, cloud=None, r0=None):
    """Both sides of ``|dbar(f,g) - dbar(f,g0)| <= ||h_g - h_g0||_inf / min h_f``
    restricted to cloud points with ``|z| >= r0`` (``h_f`` vanishes at the origin)."""
    if cloud is None:
        cloud = surface_cloud(f, p)
    if r0 is None:
        r0 = float(np.median(np.linalg.norm(cloud.z, axis=1))) * 1e-2
    keep = np.linalg.norm(cloud.z, axis=1) >= r0
    c = cloud.restrict(keep)
    h1, h0 = _hg_on_cloud(f, g, c), _hg_on_cloud(f, g0, c)
    E = c.entropy_mass
    d1 = math.exp((_log_moment(c, h1, p) - math.log(E)) / p)
    d0 = math.exp((_log_moment(c, h0, p) - math.log(E)) / p)
    lhs = abs(d1 - d0)
    rhs = float(np.max(np.abs(h1 - h0)) / np.min(c.hf))
    return {"lhs": lhs, "rhs": rhs, "r0": r0, "holds": lhs <= rhs * (1 + 1e-12)}


# ------------------------------------------------------- difference quotients

class FDContext:
    """Shared grids for difference quotients of ``t -> J(f (+)_p t ._p g)``.

    The same primal box, dual box and resolution are used for every ``t`` and
    for ``t = 0`` so that discretisation errors cancel in the differences.  The
    box is grown until the sum at ``t_max`` passes the decay check.
    """

    def __init__(self, f, g, p, t_max=0.05, points_per_axis=None, dual_points=None):
        self.f, self.g, self.p = f, g, float(p)
        n = f.dim
        self.N = points_per_axis or nm.default_points(n)
        self.Nd = dual_points or (2 * self.N - 1)
        uf, ug = _pot(f), _pot(g)
        self.box = uf.box_radius() + t_max ** (1 / p) * ug.box_radius()
        self._cache = {}
        for _ in range(12):
            try:
                self.mass(t_max)
                break
            except nm.DecayError:
                self._cache.clear()
                self.box *= 1.15
        else:
            raise nm.DecayError("no decay box found for the perturbed sum")

    def mass(self, t):
        if t not in self._cache:
            S = sum_support_grid(self.f, self.g, 1.0, t, self.p, box=self.box,
                                 points_per_axis=self.N, dual_points=self.Nd)
            e = np.exp(-S.primal.values)
            self._cache[t] = nm.integrate(S.primal.like(e))
        return self._cache[t]

    def quotient(self, t):
        return (self.mass(t) - self.mass(0.0)) / t


def lp_first_variation_fd(f, g, p, t, ctx=None, **kw):
    """One-sided difference quotient ``(J(f (+)_p t ._p g) - J(f)) / t``."""
    if not 1e-4 <= t <= 1e-1:
        raise ValueError("t must lie in [1e-4, 1e-1]")
    ctx = ctx or FDContext(f, g, p, t_max=t, **kw)
    return ctx.quotient(t)


def lp_first_variation_fd_extrapolated(f, g, p, t=0.005, ctx=None, **kw):
    """Richardson extrapolation ``2 D(t/2) - D(t)`` of the one-sided quotient."""
    ctx = ctx or FDContext(f, g, p, t_max=t, **kw)
    return 2 * ctx.quotient(t / 2) - ctx.quotient(t)
