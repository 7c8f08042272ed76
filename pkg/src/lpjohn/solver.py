"""Optimal Gaussians: the normalised problem over ``det Q = 1`` and the L_p John ellipsoid.

With ``P = Q^{-1}`` and the cloud of ``mu_p(f)``, the normalised problem is

    minimise  Phi(P) = sum_i w_i hf_i^(1-p) (z_i^T P z_i / 2)^p   over det P = 1,

a convex objective on a log-det level set with a unique minimiser.  The
stationarity condition is the moment identity

    K(P) := (n/2) sum_i w_i hf_i^(1-p) (z_i^T P z_i / 2)^(p-1) z_i z_i^T / Phi(P) = P^{-1}.

The primary solver is the damped fixed point ``P^{-1} <- (1-theta) P^{-1} + theta K(P)``
(renormalised to det 1) with a monotone-descent guard; a Riemannian Newton
iteration on ``P = R exp(S) R^T`` is the fallback.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.special import logsumexp

from . import numerics as nm
from .functions import FunctionError, InadmissibleError, Quadratic, _pot
from .variation import (P_MAX, admissible, admissible_infinity, ray_max,
                        surface_cloud)

NEWTON_MAX_STEP = 1.0  # Frobenius norm of a Newton step in log-space
SLOW_WINDOW = 10
C_N = {n: (2 * math.pi) ** (n / 2) for n in (1, 2, 3)}


class SolverError(RuntimeError):
    """Numerical failure (non-convergence or a singular moment matrix)."""


@dataclass(frozen=True)
class GaussianEllipsoid:
    """``gamma_Q(x) = exp(-x^T Q x / 2)``; ``Q`` may be ``None`` for the degenerate limit."""

    Q: np.ndarray

    @property
    def dim(self):
        return self.Q.shape[0]

    @property
    def mass(self):
        if self.Q is None:
            return 0.0
        return C_N[self.dim] / math.sqrt(np.linalg.det(self.Q))

    def support(self, y):
        y = np.asarray(y, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", y, np.linalg.inv(self.Q), y)

    def as_function(self):
        from .functions import gaussian
        return gaussian(self.Q)


@dataclass
class SolverResult:
    p: float
    Q_bar: np.ndarray
    delta_bar: float
    E_p: GaussianEllipsoid
    kkt_residual: float
    iterations: int
    trace: list = field(default_factory=list)
    converged: bool = True
    degenerate: bool = False
    method: str = "fixed-point"
    note: str = ""

    @property
    def mass(self):
        return 0.0 if self.degenerate else self.E_p.mass

    def to_dict(self):
        deg = self.degenerate
        return {
            "p": "inf" if math.isinf(self.p) else self.p,
            "Q_bar": None if deg else _mat(self.Q_bar),
            "delta_bar": None if deg else float(self.delta_bar),
            "E_p": {"Q": None if deg else _mat(self.E_p.Q), "mass": float(self.mass)},
            "kkt_residual": None if deg else float(self.kkt_residual),
            "iterations": int(self.iterations),
            "trace": [[int(k), float(o), float(r)] for k, o, r in self.trace],
            "converged": bool(self.converged),
            "degenerate": bool(deg),
            "method": self.method,
            "note": self.note,
        }


def _mat(A):
    return [[float(v) for v in row] for row in np.asarray(A)]


# ------------------------------------------------------------- moment algebra

class _Moments:
    """Objective and moment matrix of a cloud, evaluated in the log domain."""

    def __init__(self, cloud, p):
        self.z = cloud.z
        self.p = float(p)
        self.n = cloud.dim
        self.ld = cloud.log_density(p)
        self.logE = math.log(cloud.entropy_mass)
        keep = np.isfinite(self.ld) & np.any(self.z != 0, axis=1)
        self.z, self.ld = self.z[keep], self.ld[keep]

    def log_t(self, P):
        t = 0.5 * np.einsum("ij,jk,ik->i", self.z, P, self.z)
        return np.log(t)

    def log_phi(self, P, lt=None):
        lt = self.log_t(P) if lt is None else lt
        return float(logsumexp(self.ld + self.p * lt))

    def delta_bar(self, P):
        return math.exp((self.log_phi(P) - self.logE) / self.p)

    def K(self, P):
        """``K(P)`` (see module docstring) and ``log Phi(P)``."""
        lt = self.log_t(P)
        lphi = self.log_phi(P, lt)
        w = np.exp(self.ld + (self.p - 1.0) * lt - lphi)
        Km = 0.5 * self.n * (self.z * w[:, None]).T @ self.z
        return 0.5 * (Km + Km.T), lphi

    def residual(self, P):
        Km, _ = self.K(P)
        R = np.linalg.cholesky(P)
        D = R.T @ Km @ R - np.eye(self.n)
        return float(np.linalg.norm(D) / math.sqrt(self.n))

    def newton_step(self, P):
        """Newton direction for ``log Phi(R exp(S) R^T)`` in traceless symmetric ``S``."""
        n, p = self.n, self.p
        R = np.linalg.cholesky(P)
        v = self.z @ R  # whitened: t_i = |v_i|^2 / 2
        lt = np.log(0.5 * np.sum(v * v, axis=1))
        lphi = float(logsumexp(self.ld + p * lt))
        basis = _traceless_basis(n)
        # a_k = v^T E_k v / 2, b_kl = v^T (E_k E_l + E_l E_k) v / 4
        a = np.stack([0.5 * np.einsum("ij,jk,ik->i", v, E, v) for E in basis], axis=1)
        w1 = np.exp(self.ld + (p - 1.0) * lt - lphi)  # c t^(p-1) / Phi
        w2 = np.exp(self.ld + (p - 2.0) * lt - lphi)
        g = p * (w1 @ a)
        m = len(basis)
        H = np.empty((m, m))
        for k in range(m):
            for l in range(k, m):
                B = basis[k] @ basis[l] + basis[l] @ basis[k]
                b = 0.25 * np.einsum("ij,jk,ik->i", v, B, v)
                H[k, l] = H[l, k] = p * (w1 @ b) + p * (p - 1.0) * (w2 @ (a[:, k] * a[:, l]))
        # Hessian of log Phi = H/Phi - g g^T (everything already divided by Phi)
        H = H - np.outer(g, g)
        return R, basis, g, H, lphi


def _traceless_basis(n):
    out = []
    for i in range(n):
        for j in range(i, n):
            E = np.zeros((n, n))
            if i == j:
                continue
            E[i, j] = E[j, i] = 1 / math.sqrt(2)
            out.append(E)
    for k in range(n - 1):
        d = np.zeros(n)
        d[: k + 1] = 1.0
        d[k + 1] = -(k + 1)
        out.append(np.diag(d / np.linalg.norm(d)))
    return out


def _sym_expm(S):
    w, V = np.linalg.eigh(S)
    return (V * np.exp(w)) @ V.T


def default_theta(p, n):
    """Damping that cancels the linearised fixed-point map at Gaussian inputs."""
    return 1.0 / (1.0 + 2.0 * (p - 1.0) / (n + 2.0))


# -------------------------------------------------------------------- solvers

def _initial_P(cloud):
    S = (cloud.z * cloud.weight[:, None]).T @ cloud.z
    try:
        return nm.spd_normalize_det(np.linalg.inv(0.5 * (S + S.T)))
    except (np.linalg.LinAlgError, nm.NotSPDError):
        raise SolverError("second-moment matrix of the surface measure is singular") from None


def solve_Sbar(f, p, tol=1e-9, max_iter=200, theta=None, P0=None, cloud=None,
               resolution=None, method="fixed-point"):
    """Minimise ``dbar J_p(f, gamma_Q)`` over SPD ``Q`` with ``det Q = 1``.

    Returns ``(Q_bar, delta_bar, trace, info)`` where ``trace`` holds
    ``(iteration, delta_bar, kkt_residual)`` and ``info`` has ``converged``,
    ``iterations``, ``residual`` and ``method``.
    """
    if not 1 <= p <= P_MAX:
        raise ValueError(f"finite p must lie in [1, {P_MAX:g}]")
    if cloud is None:
        if not admissible(f, p):
            raise InadmissibleError(
                f"int h_gamma^p dmu_p(f) diverges for p = {p:g}; no Gaussian has finite variation")
        cloud = surface_cloud(f, p, resolution)
    mom = _Moments(cloud, p)
    n = mom.n
    P = _initial_P(cloud) if P0 is None else nm.spd_normalize_det(P0)
    th0 = default_theta(p, n) if theta is None else float(theta)
    trace = []
    lphi = mom.log_phi(P)
    res = mom.residual(P)
    trace.append((0, math.exp((lphi - mom.logE) / p), res))
    used = "fixed-point"
    stalls = 0
    it = 0
    if method == "fixed-point":
        while it < max_iter and res >= tol:
            it += 1
            Km, lphi = mom.K(P)
            Pinv = np.linalg.inv(P)
            th = th0
            for _ in range(40):
                C = (1 - th) * Pinv + th * Km
                Pn = nm.spd_normalize_det(np.linalg.inv(0.5 * (C + C.T)))
                ln = mom.log_phi(Pn)
                if ln <= lphi + 1e-13 * max(1.0, abs(lphi)):
                    break
                th *= 0.5
            else:
                stalls += 1
                break
            if ln > lphi - 1e-15 * max(1.0, abs(lphi)) and res > tol:
                stalls += 1
            P, lphi = Pn, ln
            res = mom.residual(P)
            trace.append((it, math.exp((lphi - mom.logE) / p), res))
            if stalls >= 2:
                break
            # linear rate worse than 0.7 per step over a window: hand over to Newton
            if it >= SLOW_WINDOW and res > 0.7**SLOW_WINDOW * trace[-1 - SLOW_WINDOW][2]:
                break
    if res >= tol:
        used = "newton" if method == "newton" else "fixed-point+newton"
        P, lphi, res, it = _newton(mom, P, tol, max_iter, trace, it)
    converged = res < tol
    Q_bar = nm.spd_normalize_det(np.linalg.inv(P))
    delta = math.exp((mom.log_phi(P) - mom.logE) / p)
    info = {"converged": converged, "iterations": it, "residual": res, "method": used}
    return Q_bar, delta, trace, info


def _newton(mom, P, tol, max_iter, trace, it0):
    it = it0
    lphi = mom.log_phi(P)
    res = mom.residual(P)
    budget = it0 + max(50, max_iter // 2)
    while it < budget and res >= tol:
        it += 1
        R, basis, g, H, lphi = mom.newton_step(P)
        w, V = np.linalg.eigh(H)
        w = np.maximum(w, 1e-12 * max(1.0, w.max()))
        s = -(V / w) @ V.T @ g
        step = min(1.0, NEWTON_MAX_STEP / max(np.linalg.norm(s), 1e-300))
        for _ in range(60):
            S = sum(c * E for c, E in zip(step * s, basis))
            Rn = R @ _sym_expm(0.5 * S)
            try:
                Pn = nm.spd_normalize_det(Rn @ Rn.T)
            except nm.NotSPDError:
                step *= 0.5
                continue
            ln = mom.log_phi(Pn)
            if ln <= lphi + 1e-4 * step * float(g @ s):
                break
            step *= 0.5
        else:
            break
        P, lphi = Pn, ln
        res = mom.residual(P)
        trace.append((it, math.exp((lphi - mom.logE) / mom.p), res))
    return P, lphi, res, it


def rescale_to_Sp(Q_bar, delta_bar):
    """Solution of the mass-maximisation problem from the normalised one.

    ``h_E = h_{gamma_Qbar} / delta_bar``, hence ``Q_E = delta_bar * Q_bar`` and
    ``J(E) = (2 pi)^(n/2) delta_bar^(-n/2)``.
    """
    return GaussianEllipsoid(float(delta_bar) * np.asarray(Q_bar, dtype=float))


def _degenerate(p, n, note):
    nan = np.full((n, n), np.nan)
    return SolverResult(p, nan, math.inf, GaussianEllipsoid(None), math.nan, 0, [], True, True,
                        "none", note)


def solve_Ep(f, p, tol=1e-9, max_iter=200, theta=None, P0=None, resolution=None,
             method="fixed-point", cloud=None, allow_degenerate=True):
    """L_p John ellipsoid of ``f`` (``p`` in ``[1, 32]`` or ``inf``).

    When every Gaussian has infinite variation against ``f`` (the surface
    integral diverges at the origin, or the sup-ratio is unbounded for
    ``p = inf``) the supremum of the masses is 0 and a degenerate result with
    ``mass = 0`` is returned.
    """
    u = _pot(f)
    if not getattr(u, "smooth", False):
        raise FunctionError(f"{type(u).__name__} potential is not supported by the solver")
    if math.isinf(p):
        return solve_Ep_infinity(f, tol=min(tol, 1e-10), allow_degenerate=allow_degenerate)
    p = float(p)
    if cloud is None and not admissible(f, p):
        if not allow_degenerate:
            raise InadmissibleError(f"no Gaussian has finite L_{p:g} variation against f")
        return _degenerate(p, f.dim, "surface integral diverges at the origin")
    Q_bar, delta, trace, info = solve_Sbar(f, p, tol=tol, max_iter=max_iter, theta=theta, P0=P0,
                                           resolution=resolution, method=method, cloud=cloud)
    E = rescale_to_Sp(Q_bar, delta)
    return SolverResult(p, Q_bar, delta, E, info["residual"], info["iterations"], trace,
                        info["converged"], False, info["method"])


def kkt_residual(f, p, Q, cloud=None):
    """``||R^T K R - I||_F / sqrt(n)`` at the candidate ``gamma_Q`` (``P = Q^{-1} = R R^T``).

    Invariant under scaling ``Q``, so both ``Q_bar`` and ``Q_E`` may be passed.
    """
    if cloud is None:
        cloud = surface_cloud(f, p)
    mom = _Moments(cloud, p)
    return mom.residual(np.linalg.inv(nm.as_spd(Q)))


def delta_bar_at(f, p, Q, cloud=None):
    """``dbar J_p(f, gamma_Q)`` for finite ``p``."""
    if cloud is None:
        cloud = surface_cloud(f, p)
    return _Moments(cloud, p).delta_bar(np.linalg.inv(nm.as_spd(Q)))


# ---------------------------------------------------------------------- p = inf

def constraint_directions(f, m=None):
    """Sample directions for the ``p = inf`` constraints: an equispaced or
    Fibonacci set plus, for polytope gauges, the facet normals."""
    n = f.dim
    m = m or {1: 2, 2: 64, 3: 256}[n]
    D = [nm.fibonacci_directions(n, m)]
    u = _pot(f)
    K = getattr(u, "K", None)
    if K is not None and hasattr(K, "facets"):
        a = K.facets
        D.append(a / np.linalg.norm(a, axis=1, keepdims=True))
    return np.vstack(D)


def radial_sup(f, directions):
    """``s(om) = sup_r (r^2 / 2) / h_f(r om)`` for each direction."""
    u = _pot(f)
    g = Quadratic(np.eye(f.dim))
    out = np.empty(len(directions))
    for i, om in enumerate(directions):
        out[i] = ray_max(u, g, om)[0]
    return out


def mvee_centered(points, tol=1e-12, max_iter=100000):
    """Minimum-volume origin-centred ellipsoid ``{y : y^T M y <= 1}`` containing the points.

    Khachiyan's barycentric coordinate ascent with Todd-Yildirim away steps.
    Returns ``(M, gap)`` where ``gap = max_i a_i^T M a_i / 1 - 1`` before the
    final feasibility scaling.
    """
    A = np.asarray(points, dtype=float)
    m, n = A.shape
    u = np.full(m, 1.0 / m)
    for it in range(max_iter):
        X = (A * u[:, None]).T @ A
        Xi = np.linalg.inv(X)
        kappa = np.einsum("ij,jk,ik->i", A, Xi, A)
        j = int(np.argmax(kappa))
        supp = np.flatnonzero(u > 0)
        k = supp[int(np.argmin(kappa[supp]))]
        up = kappa[j] / n - 1.0
        down = 1.0 - kappa[k] / n
        if max(up, down) <= tol:
            break
        if up >= down:
            lam = (kappa[j] - n) / (n * (kappa[j] - 1.0))
            u *= 1 - lam
            u[j] += lam
        else:
            bound = u[k] / (1.0 - u[k])
            # for kappa_k <= 1 log det increases all the way to the bound
            lam = bound if kappa[k] <= 1.0 else min((n - kappa[k]) / (n * (kappa[k] - 1.0)), bound)
            u *= 1 + lam
            u[k] -= lam
            u[u < 0] = 0.0
    X = (A * u[:, None]).T @ A
    M = np.linalg.inv(X) / n
    kappa = np.einsum("ij,jk,ik->i", A, M, A)
    gap = float(kappa.max() - 1.0)
    M = M / kappa.max()
    return 0.5 * (M + M.T), max(gap, 0.0), it


def solve_Ep_infinity(f, directions=None, tol=1e-12, allow_degenerate=True):
    """Gaussian of maximal mass with ``h_gamma <= h_f`` on all sampled directions.

    With ``P = Q^{-1}`` the constraint along ``om`` reads ``a^T P a <= 1``,
    ``a = om sqrt(s(om))``, so the problem is a centred minimum-volume
    enclosing ellipsoid of the points ``a``.  The reported residual is the
    duality gap.
    """
    n = f.dim
    if not admissible_infinity(f):
        if not allow_degenerate:
            raise InadmissibleError("sup h_gamma / h_f is infinite for every Gaussian")
        return _degenerate(math.inf, n, "sup-ratio unbounded for every Gaussian")
    D = constraint_directions(f) if directions is None else np.asarray(directions, dtype=float)
    s = radial_sup(f, D)
    if not np.all(np.isfinite(s)) or np.any(s <= 0):
        raise SolverError("radial constraint values are not finite and positive")
    A = D * np.sqrt(s)[:, None]
    M, gap, it = mvee_centered(A, tol=tol)
    Q_E = np.linalg.inv(M)
    Q_E = 0.5 * (Q_E + Q_E.T)
    Q_bar = nm.spd_normalize_det(Q_E)
    delta = float(np.linalg.det(Q_E)) ** (1.0 / n)
    trace = [(it, delta, gap)]
    return SolverResult(math.inf, Q_bar, delta, GaussianEllipsoid(Q_E), gap, it, trace,
                        gap < 1e-6, False, "mvee")


def multistart_probe(f, p, starts=10, seed=0, tol=1e-9, cloud=None):
    """Largest operator-norm distance between ``Q_bar`` from random starts and the default start."""
    rng = np.random.default_rng(seed)
    if cloud is None:
        cloud = surface_cloud(f, p)
    ref, *_ = solve_Sbar(f, p, tol=tol, cloud=cloud)
    worst = 0.0
    for _ in range(starts):
        P0 = nm.random_spd(f.dim, rng, det=1.0, spread=1.0)
        Q, *_ = solve_Sbar(f, p, tol=tol, cloud=cloud, P0=P0)
        worst = max(worst, nm.op_norm(Q - ref))
    return worst
