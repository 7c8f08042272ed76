"""Brute-force reference values, kept free of the solver's algorithms.

* :func:`grid_search_Sbar` minimises ``dbar J_p(f, gamma_Q)`` over a
  ``(t, theta)`` grid of det-1 matrices (n <= 2), then refines by trisection;
* :func:`mc_total_mass` estimates ``J(f)`` by defensive importance sampling;
* :func:`dense_conjugate` evaluates ``u*(y)`` by a dense search plus polish.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.optimize import minimize
from scipy.stats import multivariate_normal, multivariate_t

from . import numerics as nm
from .functions import LogConcaveFunction, Potential, _pot, gaussian
from .variation import lp_first_variation, surface_cloud


class OracleError(RuntimeError):
    pass


def _default_t():
    return np.geomspace(1 / 16, 16, 41)


def _default_theta():
    return np.linspace(0.0, math.pi, 36, endpoint=False)


@dataclass
class OracleConfig:
    eigen_ratio_grid: np.ndarray = field(default_factory=_default_t)
    rotation_grid: np.ndarray = field(default_factory=_default_theta)
    mc_samples: int = 200_000
    seed: int = 0
    refine_sweeps: int = 6

    def __post_init__(self):
        self.eigen_ratio_grid = np.asarray(self.eigen_ratio_grid, dtype=float)
        self.rotation_grid = np.asarray(self.rotation_grid, dtype=float)
        if self.eigen_ratio_grid.size == 0 or self.rotation_grid.size == 0:
            raise ValueError("search grids must be nonempty")
        if np.any(self.eigen_ratio_grid <= 0):
            raise ValueError("eigenvalue ratios must be positive")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be positive")


# ------------------------------------------------------------------ S̄_p search

def q_of(t, theta):
    """``R(theta) diag(t, 1/t) R(theta)^T``."""
    c, s = math.cos(theta), math.sin(theta)
    R = np.array([[c, -s], [s, c]])
    return (R * np.array([t, 1.0 / t])) @ R.T


def _q_exp(a, b):
    """``exp([[a, b], [b, -a]])``: det 1, smooth through the identity."""
    r = math.hypot(a, b)
    if r == 0:
        return np.eye(2)
    S = np.array([[a, b], [b, -a]]) / r
    return math.cosh(r) * np.eye(2) + math.sinh(r) * S


def grid_search_Sbar(f, p, config=None, cloud=None):
    """Exhaustive minimum of ``dbar J_p(f, gamma_Q)`` over ``det Q = 1``.

    Returns ``(Q_best, delta_best)``.  For ``n = 1`` the only candidate is
    ``Q = 1``.
    """
    cfg = config or OracleConfig()
    if math.isinf(p):
        raise ValueError("the grid search covers finite p only")
    n = f.dim
    if cloud is None:
        cloud = surface_cloud(f, p)

    def objective(Q):
        return lp_first_variation(f, gaussian(Q), p, cloud=cloud).normalized

    if n == 1:
        Q = np.eye(1)
        return Q, objective(Q)
    if n != 2:
        raise ValueError("the grid-search oracle is limited to n <= 2")
    best = (math.inf, 1.0, 0.0)
    for t in cfg.eigen_ratio_grid:
        for th in cfg.rotation_grid:
            v = objective(q_of(t, th))
            if v < best[0]:  # strict: lexicographic tie order
                best = (v, t, th)
    _, t, th = best
    # refine in exp-coordinates, where the objective is smooth and convex
    lt = math.log(t)
    a, b = lt * math.cos(2 * th), lt * math.sin(2 * th)
    dlt = np.diff(np.log(cfg.eigen_ratio_grid)).max() if cfg.eigen_ratio_grid.size > 1 else 1.0
    dth = math.pi / cfg.rotation_grid.size
    w = max(dlt, 2 * abs(lt) * dth, 0.05)
    x = np.array([a, b])
    fval = objective(_q_exp(*x))
    for _ in range(cfg.refine_sweeps):
        for k in range(2):
            lo, hi = x[k] - w, x[k] + w
            for _ in range(40):
                m1, m2 = lo + (hi - lo) / 3, hi - (hi - lo) / 3
                y1, y2 = x.copy(), x.copy()
                y1[k], y2[k] = m1, m2
                if objective(_q_exp(*y1)) <= objective(_q_exp(*y2)):
                    hi = m2
                else:
                    lo = m1
            y = x.copy()
            y[k] = 0.5 * (lo + hi)
            fy = objective(_q_exp(*y))
            if fy <= fval:
                x, fval = y, fy
        w *= 0.5
    return _q_exp(*x), fval


# ------------------------------------------------------------------ MC mass

def _second_moment(f):
    u = _pot(f)
    g = u.sample(u.box_radius(), {1: 401, 2: 101, 3: 41}[u.dim])
    dens = np.exp(-g.values)
    X = g.nodes()
    wts = nm.trapezoid_weights(g) * dens
    wts = wts.reshape(-1)
    X = X.reshape(-1, u.dim)
    m = np.sum(wts)
    S = (X * wts[:, None]).T @ X / m
    return 0.5 * (S + S.T)


def mc_total_mass(f, config=None):
    """Importance-sampling estimate of ``J(f)``: ``(estimate, stderr)``.

    Proposal: an equal mixture of ``N(0, 1.5 S)`` and a Student-t (3 degrees
    of freedom) with scale ``S``, ``S`` the second-moment matrix of ``f``.
    """
    cfg = config or OracleConfig()
    rng = np.random.default_rng(cfg.seed)
    n, N = f.dim, int(cfg.mc_samples)
    S = _second_moment(f)
    gauss = multivariate_normal(np.zeros(n), 1.5 * S)
    student = multivariate_t(np.zeros(n), S, df=3)
    k = rng.binomial(N, 0.5)
    X = np.vstack([np.atleast_2d(gauss.rvs(size=k, random_state=rng)).reshape(k, n),
                   np.atleast_2d(student.rvs(size=N - k, random_state=rng)).reshape(N - k, n)])
    q = 0.5 * gauss.pdf(X).reshape(-1) + 0.5 * student.pdf(X).reshape(-1)
    w = f(X) / q
    ess = w.sum() ** 2 / np.sum(w * w) if np.any(w > 0) else 0.0
    if ess < 0.01 * N:
        raise OracleError(f"effective sample size {ess:.0f} is below 1% of {N}")
    return float(w.mean()), float(w.std(ddof=1) / math.sqrt(N))


# ------------------------------------------------------------------ conjugate

def _as_callable(u):
    if isinstance(u, LogConcaveFunction):
        return u.potential.value
    if isinstance(u, Potential):
        return u.value
    return u


def dense_conjugate(u, y, radius, samples=None):
    """``sup_x <x, y> - u(x)`` over ``[-radius, radius]^n`` by dense search.

    Raises :class:`OracleError` when the best sample lies on the box boundary.
    """
    fn = _as_callable(u)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    n = y.size
    samples = samples or {1: 200_001, 2: 801, 3: 121}[n]
    ax = np.linspace(-radius, radius, samples)
    X = np.stack(np.meshgrid(*([ax] * n), indexing="ij"), axis=-1).reshape(-1, n)
    vals = X @ y - fn(X)
    k = int(np.argmax(vals))
    idx = np.unravel_index(k, (samples,) * n)
    if any(i in (0, samples - 1) for i in idx):
        raise OracleError("maximiser on the sampling boundary; increase radius")
    best = float(vals[k])
    res = minimize(lambda x: -(float(x @ y) - float(fn(x[None, :])[0])), X[k],
                   method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000})
    if np.all(np.abs(res.x) <= radius) and np.isfinite(res.fun):
        best = max(best, -float(res.fun))
    return best
