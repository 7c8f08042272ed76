"""Inequality suite: every structural claim about L_p John ellipsoids as a
numerical check with an explicit margin and tolerance.

Orientation: each record has ``margin = rhs - lhs`` and passes iff
``margin >= -tolerance_used``.  Equalities are encoded with
``lhs = |deviation|`` and ``rhs = 0``.
"""

from dataclasses import dataclass, field
import csv
import io
import json
import math

import numpy as np

from . import numerics as nm
from .bodies import Polytope, random_symmetric_polytope
from .functions import (FunctionError, GridPotential, InadmissibleError, LogConcaveFunction,
                        _pot, entropy_mass, from_spec, gauge_power, gaussian, gl_image, polar,
                        total_mass)
from .solver import (SolverError, constraint_directions, kkt_residual, multistart_probe,
                     rescale_to_Sp, solve_Ep)
from .variation import (admissible, lp_first_variation, sup_ratio_variation)

DEFAULT_LADDER = (1.0, 1.5, 2.0, 4.0, 8.0, 16.0, 32.0, math.inf)
CONTINUITY_SCHEDULE = (0.2, 0.1, 0.05, 0.025)
SCHEMA = "lpjohn.suite/1"

TOL_CLOSED = 1e-6
TOL_SOLVER = 1e-4
TOL_KKT = 1e-5
TOL_ENTROPY = 1e-3
TOL_GL = 1e-3
TOL_JENSEN = 1e-6
TOL_SUP = 1e-3
TOL_DET = 1e-9
CORRUPTION = 0.10


class CorpusError(ValueError):
    pass


# ---------------------------------------------------------------- records

def _num(x):
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


@dataclass
class InequalityRecord:
    name: str
    member: str
    p: float
    statement: str
    lhs: float
    rhs: float
    tolerance_used: float
    note: str = ""

    @property
    def margin(self):
        if self.lhs == self.rhs:
            return 0.0  # also covers inf <= inf
        if math.isinf(self.rhs) and self.rhs > 0 and not math.isinf(self.lhs):
            return math.inf
        return self.rhs - self.lhs

    @property
    def passed(self):
        m = self.margin
        return bool((not math.isnan(m)) and m >= -self.tolerance_used)

    def to_dict(self):
        return {"name": self.name, "member": self.member, "p": _num(self.p),
                "statement": self.statement, "lhs": _num(self.lhs), "rhs": _num(self.rhs),
                "margin": _num(self.margin), "pass": self.passed,
                "tolerance_used": _num(self.tolerance_used), "note": self.note}


def _le(name, member, p, statement, lhs, rhs, tol, note=""):
    return InequalityRecord(name, member, p, statement, float(lhs), float(rhs), float(tol), note)


def _eq(name, member, p, statement, value, target, tol, relative=True, note=""):
    dev = abs(value - target)
    if relative and target != 0:
        dev /= abs(target)
    return InequalityRecord(name, member, p, statement, dev, 0.0, float(tol), note)


def _failure(name, member, p, statement, exc):
    return InequalityRecord(name, member, p, statement, math.nan, math.nan, 0.0,
                            f"{type(exc).__name__}: {exc}")


@dataclass
class SuiteReport:
    records: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(r.passed for r in self.records)

    @property
    def failures(self):
        return [r for r in self.records if not r.passed]

    def summary(self):
        return {"records": len(self.records), "passed": sum(r.passed for r in self.records),
                "failed": len(self.failures), "all_pass": self.passed}

    def to_dict(self):
        return {"schema": SCHEMA, "config": self.config, "summary": self.summary(),
                "records": [r.to_dict() for r in self.records]}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "member", "p", "lhs", "rhs", "margin", "pass"])
        for r in self.records:
            d = r.to_dict()
            w.writerow([d["name"], d["member"], d["p"], repr(d["lhs"]), repr(d["rhs"]),
                        repr(d["margin"]), int(d["pass"])])
        return buf.getvalue()


# ----------------------------------------------------------------- corpus

@dataclass
class CorpusMember:
    name: str
    function: LogConcaveFunction
    gaussian_q: np.ndarray = None  # set for Gaussian members (closed forms apply)


@dataclass
class TestCorpus:
    __test__ = False  # not a pytest class
    members: list
    p_ladder: tuple = DEFAULT_LADDER


def smooth_max_potential(x):
    """``log((exp(x^T A x / 2) + exp(x^T B x / 2)) / 2)``, A = diag(2, 1/2), B = diag(1/2, 2)."""
    x = np.asarray(x, dtype=float)
    a = x[..., 0] ** 2 + 0.25 * x[..., 1] ** 2
    b = 0.25 * x[..., 0] ** 2 + x[..., 1] ** 2
    return np.logaddexp(a, b) - math.log(2.0)


def smooth_max_function(points_per_axis=257):
    u = GridPotential.from_callable(smooth_max_potential, 2, points_per_axis, growth=(2.0, 2.0))
    return LogConcaveFunction(u, "smooth_max")


def builtin_corpus(seed=2024, p_ladder=DEFAULT_LADDER):
    """Standard and anisotropic Gaussians; gauge powers over the square, the
    regular hexagon and a seeded random symmetric polygon (q = 1.5, 2, 4);
    the smoothed maximum of two quadratics on a grid."""
    members = []
    for name, Q in (("gauss_I", np.eye(2)), ("gauss_4_1", np.diag([4.0, 1.0])),
                    ("gauss_9_1", np.diag([9.0, 1.0]))):
        members.append(CorpusMember(name, gaussian(Q, name), Q))
    bodies = (("square", Polytope.cube(2)), ("hexagon", Polytope.regular(6)),
              ("randpoly", random_symmetric_polytope(2, 5, np.random.default_rng(seed))))
    for bname, K in bodies:
        for q in (1.5, 2.0, 4.0):
            name = f"{bname}_q{q:g}"
            members.append(CorpusMember(name, gauge_power(K, q, name)))
    members.append(CorpusMember("smooth_max", smooth_max_function()))
    return TestCorpus(members, tuple(p_ladder))


def corpus_from_file(path, p_ladder=None):
    """JSON document ``{"functions": [{"name": ..., "spec": {...}}], "p_ladder": [...]}``."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CorpusError(f"cannot read corpus: {exc}") from None
    items = doc.get("functions") if isinstance(doc, dict) else None
    if not items:
        raise CorpusError("corpus needs a nonempty 'functions' list")
    members = []
    for i, item in enumerate(items):
        name = item.get("name", f"f{i}")
        f = from_spec(item["spec"])
        Q = None
        if item["spec"].get("type") == "gaussian":
            Q = _pot(f).Q
        members.append(CorpusMember(name, LogConcaveFunction(f.potential, name), Q))
    ladder = p_ladder or tuple(parse_p(v) for v in doc.get("p_ladder", DEFAULT_LADDER))
    return TestCorpus(members, ladder)


def parse_p(v):
    """A real ``p >= 1`` or the string ``"inf"`` (the only spelling of infinity)."""
    raw = v
    if isinstance(v, str):
        if v.strip() == "inf":
            return math.inf
        try:
            v = float(v)
        except ValueError:
            raise ValueError(f"p must be a number >= 1 or 'inf', got {raw!r}") from None
    v = float(v)
    if not (math.isfinite(v) and v >= 1):
        raise ValueError(f"p must be a number >= 1 or 'inf', got {raw!r}")
    return v


# ------------------------------------------------------------ solve cache

def _corrupt(res):
    """Negative control: perturb ``Q_bar`` by 10% along a fixed traceless direction."""
    if res.degenerate:
        return res
    n = res.Q_bar.shape[0]
    D = np.diag(np.linspace(1.0, -1.0, n)) if n > 1 else np.eye(1)
    Qb = res.Q_bar @ (np.eye(n) + CORRUPTION * D)
    Qb = 0.5 * (Qb + Qb.T)
    res.Q_bar = Qb
    res.E_p = rescale_to_Sp(Qb, res.delta_bar)
    return res


class _Solves:
    def __init__(self, corrupt=False, tol=1e-10):
        self.cache = {}
        self.corrupt = corrupt
        self.tol = tol

    def get(self, key, f, p):
        k = (key, p)
        if k not in self.cache:
            try:
                r = solve_Ep(f, p, tol=self.tol)
                if self.corrupt:
                    r = _corrupt(r)
                self.cache[k] = r
            except (SolverError, FunctionError, nm.NumericsError, InadmissibleError) as exc:
                self.cache[k] = exc
        out = self.cache[k]
        if isinstance(out, Exception):
            raise out
        return out


def _mass(solves, m, p):
    return solves.get(m.name, m.function, p).mass


# ------------------------------------------------------------------ checks

ST_CHAIN = "J(E_q f) <= J(E_p f) for p < q (mass nonincreasing in p)"
ST_BOUND = "J(E_p f) <= J(f)"
ST_BOUND_EQ = "J(E_p f) = J(f) for Gaussian f"
ST_SANTALO = "J(E_p f) J(E_p f polar) <= (2 pi)^n"
ST_SANTALO_EQ = "J(E_p f) J(E_p f polar) = (2 pi)^n for Gaussian f"
ST_BALL_EVEN = "J(f)/J(E_p f) <= (e/n)(n!)^(1/n) 2^n / omega_n for even f"
ST_BALL_GEN = "J(f)/J(E_p f) <= n^((n-2)/n) (n+1)^((n+1)/2) e / ((n!)^((n-1)/n) omega_n)"
ST_CONT_MONO = "Qbar gap decreases along the perturbation schedule"
ST_CONT_LAST = "last Qbar gap < 0.1 x first gap"
ST_KKT = "whitened moment-matrix residual at E_p f is below 1e-5"
ST_NORM = "dbar J_p(f, E_p f) = 1"
ST_DET = "det Qbar = 1"
ST_UNIQUE = "random initialisations reach the same Qbar"
ST_SELF = "dbar J_p(f, f) = 1"
ST_ENTROPY = "p delta J_p(f, f) = J(f^diamond)"
ST_JENSEN = "dbar J_p(f, g) nondecreasing in p"
ST_SUP = "dbar J_32(f, g) <= sup h_g/h_f"
ST_GL = "dbar J_p(f o T, g) = dbar J_p(f, g o T^-1)"
ST_GL_RAW = "delta J_p(f o T, g) = |det T|^-1 delta J_p(f, g o T^-1)"


def ball_ratio_bounds(n):
    """``(even, general)`` upper bounds on ``J(f)/J(E_p f)``."""
    w = nm.unit_ball_volume(n)
    fac = math.factorial(n)
    even = (math.e / n) * fac ** (1.0 / n) * 2**n / w
    general = n ** ((n - 2) / n) * (n + 1) ** ((n + 1) / 2) * math.e / (fac ** ((n - 1) / n) * w)
    return even, general


def is_even(f, samples=64, seed=0):
    """Spot check ``f(x) = f(-x)``."""
    u = _pot(f)
    ev = getattr(u, "is_even", None)
    if ev is not None:
        return bool(ev())
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (samples, f.dim)) * u.box_radius() * 0.5
    a, b = f(X), f(-X)
    return bool(np.allclose(a, b, rtol=1e-9, atol=1e-300))


def check_mass_monotone_in_p(m, ladder, solves):
    out = []
    for p0, p1 in zip(ladder[:-1], ladder[1:]):
        try:
            J0, J1 = _mass(solves, m, p0), _mass(solves, m, p1)
            out.append(_le("mass_chain", m.name, p1, ST_CHAIN, J1, J0, TOL_SOLVER * J0,
                           note=f"p={p0:g} -> {p1:g}"))
        except Exception as exc:  # noqa: BLE001 - recorded as data
            out.append(_failure("mass_chain", m.name, p1, ST_CHAIN, exc))
    return out


def check_mass_bound(m, ladder, solves):
    out = []
    J = total_mass(m.function)
    for p in ladder:
        try:
            JE = _mass(solves, m, p)
            out.append(_le("mass_bound", m.name, p, ST_BOUND, JE, J, TOL_SOLVER * J))
            if m.gaussian_q is not None:
                out.append(_eq("mass_bound_equality", m.name, p, ST_BOUND_EQ, JE, J, TOL_CLOSED))
        except Exception as exc:  # noqa: BLE001
            out.append(_failure("mass_bound", m.name, p, ST_BOUND, exc))
    return out


def check_santalo_product(m, ladder, solves):
    out = []
    n = m.function.dim
    cn2 = (2 * math.pi) ** n
    try:
        fo = polar(m.function)
    except Exception as exc:  # noqa: BLE001
        return [_failure("santalo", m.name, math.nan, ST_SANTALO, exc)]
    for p in ladder:
        try:
            prod = _mass(solves, m, p) * solves.get(m.name + "/polar", fo, p).mass
            out.append(_le("santalo", m.name, p, ST_SANTALO, prod, cn2, TOL_SOLVER * cn2))
            if m.gaussian_q is not None:
                out.append(_eq("santalo_equality", m.name, p, ST_SANTALO_EQ, prod, cn2, TOL_CLOSED))
        except Exception as exc:  # noqa: BLE001
            out.append(_failure("santalo", m.name, p, ST_SANTALO, exc))
    return out


def check_ball_ratio(m, ladder, solves):
    out = []
    n = m.function.dim
    even_b, gen_b = ball_ratio_bounds(n)
    J = total_mass(m.function)
    even = is_even(m.function)
    for p in ladder:
        try:
            JE = _mass(solves, m, p)
            ratio = J / JE if JE > 0 else math.inf
            note = "" if JE > 0 else "E_p f degenerate (mass 0)"
            if even:
                out.append(_le("ball_ratio_even", m.name, p, ST_BALL_EVEN, ratio, even_b,
                               TOL_SOLVER * even_b, note))
            out.append(_le("ball_ratio_general", m.name, p, ST_BALL_GEN, ratio, gen_b,
                           TOL_SOLVER * gen_b, note))
        except Exception as exc:  # noqa: BLE001
            out.append(_failure("ball_ratio", m.name, p, ST_BALL_EVEN, exc))
    return out


def perturbation_direction(n, seed):
    rng = np.random.default_rng(seed)
    D = rng.standard_normal((n, n))
    return D / nm.op_norm(D)


def check_continuity(m, p=2.0, schedule=CONTINUITY_SCHEDULE, seed=0, solves=None):
    f = m.function
    try:
        base = solves.get(m.name, f, p) if solves else solve_Ep(f, p)
        if base.degenerate:
            return []
        D = perturbation_direction(f.dim, seed)
        gaps = []
        for eps in schedule:
            fi = gl_image(f, np.eye(f.dim) + eps * D)
            ri = solve_Ep(fi, p, tol=1e-10)
            gaps.append(nm.op_norm(ri.Q_bar - base.Q_bar))
    except Exception as exc:  # noqa: BLE001
        return [_failure("continuity", m.name, p, ST_CONT_MONO, exc)]
    out = []
    for (e0, g0), (e1, g1) in zip(zip(schedule, gaps), zip(schedule[1:], gaps[1:])):
        out.append(_le("continuity_monotone", m.name, p, ST_CONT_MONO, g1, g0, TOL_CLOSED,
                       note=f"eps={e0:g} -> {e1:g}"))
    out.append(_le("continuity_decay", m.name, p, ST_CONT_LAST, gaps[-1], 0.1 * gaps[0], 0.0,
                   note="gaps=" + ",".join(f"{g:.6g}" for g in gaps)))
    return out


def check_solver_invariants(m, ladder, solves, multistart_p=2.0, seed=0):
    out = []
    f = m.function
    for p in ladder:
        try:
            r = solves.get(m.name, f, p)
        except Exception as exc:  # noqa: BLE001
            out.append(_failure("solver", m.name, p, ST_KKT, exc))
            continue
        if r.degenerate:
            out.append(InequalityRecord("solver_degenerate", m.name, p,
                                        "no Gaussian has finite variation; E_p f has mass 0",
                                        0.0, 0.0, 0.0, r.note))
            continue
        try:
            out.append(_eq("det_Qbar", m.name, p, ST_DET, float(np.linalg.det(r.Q_bar)), 1.0,
                           TOL_DET))
            if math.isinf(p):
                dirs = np.vstack([nm.fibonacci_directions(f.dim, {1: 2, 2: 256, 3: 1024}[f.dim]),
                                  constraint_directions(f)])
                val = sup_ratio_variation(f, gaussian(r.E_p.Q), directions=dirs)
                out.append(_eq("normalisation", m.name, p, ST_NORM, val, 1.0, TOL_SOLVER))
            else:
                res = kkt_residual(f, p, r.E_p.Q)
                out.append(_le("kkt", m.name, p, ST_KKT, res, TOL_KKT, 0.0))
                val = lp_first_variation(f, gaussian(r.E_p.Q), p).normalized
                out.append(_eq("normalisation", m.name, p, ST_NORM, val, 1.0, TOL_SOLVER))
        except Exception as exc:  # noqa: BLE001
            out.append(_failure("solver", m.name, p, ST_KKT, exc))
    if multistart_p in ladder and admissible(f, multistart_p):
        try:
            spread = multistart_probe(f, multistart_p, starts=10, seed=seed)
            out.append(_le("uniqueness", m.name, multistart_p, ST_UNIQUE, spread, TOL_SOLVER, 0.0))
        except Exception as exc:  # noqa: BLE001
            out.append(_failure("uniqueness", m.name, multistart_p, ST_UNIQUE, exc))
    return out


def check_variation_invariants(m, ladder, seed=0):
    out = []
    f = m.function
    n = f.dim
    Jd = entropy_mass(f)
    for p in (1.0, 2.0, 4.0):
        if not admissible(f, p):
            continue
        try:
            rep = lp_first_variation(f, f, p)
            out.append(_eq("self_variation", m.name, p, ST_SELF, rep.normalized, 1.0, TOL_SOLVER))
            out.append(_eq("entropy_identity", m.name, p, ST_ENTROPY, p * rep.delta_Jp, Jd,
                           TOL_ENTROPY))
        except Exception as exc:  # noqa: BLE001
            out.append(_failure("self_variation", m.name, p, ST_SELF, exc))
    g = gaussian(np.eye(n))
    prev, prev_p = None, None
    for p in ladder:
        try:
            val = lp_first_variation(f, g, p).normalized if admissible(f, p) else math.inf
        except Exception as exc:  # noqa: BLE001
            out.append(_failure("jensen", m.name, p, ST_JENSEN, exc))
            continue
        if prev is not None:
            out.append(_le("jensen", m.name, p, ST_JENSEN, prev, val, TOL_JENSEN * max(1.0, prev),
                           note=f"p={prev_p:g} -> {p:g}"))
        if p == 32.0 and math.isfinite(val):
            try:
                sup = lp_first_variation(f, g, math.inf).normalized
                out.append(_le("jensen_sup", m.name, p, ST_SUP, val, sup, TOL_SUP))
            except Exception as exc:  # noqa: BLE001
                out.append(_failure("jensen_sup", m.name, p, ST_SUP, exc))
        prev, prev_p = val, p
    # GL relations with g = gaussian(I), p = 2
    p = 2.0
    if admissible(f, p) and n >= 1:
        try:
            rng = np.random.default_rng(seed + 17)
            T = np.eye(n) + 0.3 * rng.standard_normal((n, n))
            Tinv = np.linalg.inv(T)
            lhs = lp_first_variation(gl_image(f, T), g, p)
            rhs = lp_first_variation(f, gl_image(g, Tinv), p)
            out.append(_eq("gl_normalised", m.name, p, ST_GL, lhs.normalized, rhs.normalized, TOL_GL))
            out.append(_eq("gl_raw", m.name, p, ST_GL_RAW, lhs.delta_Jp,
                           rhs.delta_Jp / abs(np.linalg.det(T)), TOL_GL))
        except Exception as exc:  # noqa: BLE001
            out.append(_failure("gl", m.name, p, ST_GL, exc))
    return out


def run_suite(corpus=None, p_ladder=None, seed=0, corrupt=False, checks=None):
    """Run every check over the corpus; failures are data, never exceptions.

    ``corrupt=True`` perturbs every solver output by 10% (negative control).
    """
    corpus = corpus or builtin_corpus()
    ladder = tuple(p_ladder or corpus.p_ladder)
    ladder = tuple(sorted(ladder))
    solves = _Solves(corrupt=corrupt)
    wanted = set(checks or ("solver", "chain", "bound", "santalo", "ball", "continuity",
                            "variation"))
    records = []
    for m in corpus.members:
        if "solver" in wanted:
            records += check_solver_invariants(m, ladder, solves, seed=seed)
        if "chain" in wanted:
            records += check_mass_monotone_in_p(m, ladder, solves)
        if "bound" in wanted:
            records += check_mass_bound(m, ladder, solves)
        if "santalo" in wanted:
            records += check_santalo_product(m, ladder, solves)
        if "ball" in wanted:
            records += check_ball_ratio(m, ladder, solves)
        if "continuity" in wanted:
            records += check_continuity(m, seed=seed, solves=solves)
        if "variation" in wanted:
            records += check_variation_invariants(m, ladder, seed=seed)
    config = {"members": [m.name for m in corpus.members], "p_ladder": [_num(p) for p in ladder],
              "seed": seed, "corrupt": bool(corrupt), "checks": sorted(wanted)}
    return SuiteReport(records, config)
