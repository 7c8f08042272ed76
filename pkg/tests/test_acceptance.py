"""End-to-end acceptance criteria, one test per criterion.

Each test prints one ``PASS``/``FAIL`` line (also collected in the terminal
summary) and then asserts.  Tolerances are the stated acceptance tolerances.
"""

import json
import math

import numpy as np
import pytest

from lpjohn import numerics as nm
from lpjohn.cli import main
from lpjohn.functions import GridPotential, Quadratic, entropy_mass, gaussian, gl_image
from lpjohn.oracle import dense_conjugate, grid_search_Sbar
from lpjohn.solver import kkt_residual, solve_Ep, solve_Sbar
from lpjohn.validation import (builtin_corpus, check_continuity, run_suite, smooth_max_function,
                               smooth_max_potential)
from lpjohn.variation import (lp_first_variation, lp_first_variation_fd_extrapolated,
                              sup_ratio_variation, surface_cloud)

LADDER = (1.0, 1.5, 2.0, 4.0, 8.0, 16.0, 32.0, math.inf)


@pytest.fixture(scope="module")
def corpus():
    return builtin_corpus()


@pytest.fixture(scope="module")
def members(corpus):
    return {m.name: m.function for m in corpus.members}


@pytest.fixture(scope="module")
def inequality_report(corpus):
    return run_suite(corpus, checks=["solver", "chain", "bound", "santalo", "ball"])


def _failures(report, prefix):
    rows = [r for r in report.records if r.name.startswith(prefix)]
    assert rows, f"no records named {prefix}*"
    return rows, [r for r in rows if not r.passed]


def _worst(bad):
    finite = [r for r in bad if math.isfinite(r.lhs)]
    out = f"{len(bad) - len(finite)} degenerate (mass 0)" if len(finite) < len(bad) else ""
    if finite:
        r = min(finite, key=lambda r: r.margin)
        out += (", " if out else "") + (f"worst finite {r.name} {r.member} p={r.p:g}: "
                                        f"lhs={r.lhs:.6g} rhs={r.rhs:.6g}")
    return out


# --------------------------------------------------------------- criteria

def _fixed_point_matrices(n):
    rng = np.random.default_rng(100 + n)
    out = [np.eye(n)]
    for a in (4.0, 9.0):
        out.append(np.diag([a] + [1.0] * (n - 1)))
    out.append(nm.random_spd(n, rng))
    return out


def test_c01_gaussian_fixed_point(acceptance):
    worst_q, worst_m = 0.0, 0.0
    for n in (1, 2, 3):
        for Q in _fixed_point_matrices(n):
            exact = (2 * math.pi) ** (n / 2) / math.sqrt(np.linalg.det(Q))
            for p in (1.0, 2.0, 8.0, math.inf):
                r = solve_Ep(gaussian(Q), p)
                worst_q = max(worst_q, nm.op_norm(r.E_p.Q - Q))
                worst_m = max(worst_m, abs(r.mass / exact - 1))
    ok = worst_q < 1e-4 and worst_m < 1e-6
    acceptance("C1 Gaussian fixed point", ok, f"max |Q_E - Q| = {worst_q:.2e}, "
               f"max mass rel err = {worst_m:.2e}")
    assert ok


def test_c02_oracle_equivalence(acceptance, members):
    names = [f"{b}_q{q}" for b in ("square", "hexagon") for q in ("1.5", "2", "4")] + ["smooth_max"]
    worst_q, worst_d = 0.0, 0.0
    for name in names:
        f = members[name]
        for p in (1.0, 2.0):
            cloud = surface_cloud(f, p)
            Qs, ds, _, _ = solve_Sbar(f, p, cloud=cloud)
            Qo, do = grid_search_Sbar(f, p, cloud=cloud)
            worst_q = max(worst_q, nm.op_norm(Qs - Qo))
            worst_d = max(worst_d, abs(ds / do - 1))
    ok = worst_q < 1e-2 and worst_d < 1e-3
    acceptance("C2 solver vs grid-search oracle", ok,
               f"max |dQbar| = {worst_q:.2e}, max dbar rel gap = {worst_d:.2e}")
    assert ok


def test_c03_variation_vs_difference_quotient(acceptance, members):
    g = members["gauss_I"]
    pairs = [("gauss_I", g), ("gauss_4_1", g), ("square_q2", g), ("smooth_max", g)]
    pairs = [(members[a], b, f"{a},gauss_I") for a, b in pairs]
    pairs += [(g, members["square_q2"], "gauss_I,square_q2"),
              (g, members["gauss_4_1"], "gauss_I,gauss_4_1")]
    worst, where = 0.0, ""
    for f, h, label in pairs:
        for p in (1.0, 2.0):
            exact = lp_first_variation(f, h, p).delta_Jp
            fd = lp_first_variation_fd_extrapolated(f, h, p, t=0.005, points_per_axis=257)
            gap = abs(fd / exact - 1)
            if gap > worst:
                worst, where = gap, f"({label}) p={p:g}"
    ok = worst < 0.02
    acceptance("C3 variation formula vs difference quotient", ok,
               f"max rel gap = {worst:.2e} at {where}")
    assert ok


def test_c04_normalisation_identity(acceptance, members):
    worst_n, worst_e = 0.0, 0.0
    for f in members.values():
        ent = entropy_mass(f)
        for p in (1.0, 2.0, 4.0):
            rep = lp_first_variation(f, f, p)
            worst_n = max(worst_n, abs(rep.normalized - 1))
            worst_e = max(worst_e, abs(p * rep.delta_Jp / ent - 1))
    ok = worst_n <= 1e-4 and worst_e <= 1e-3
    acceptance("C4 normalisation identity", ok,
               f"max |dbar - 1| = {worst_n:.2e}, max entropy rel err = {worst_e:.2e}")
    assert ok


def test_c05_jensen_monotonicity(acceptance, members):
    pairs = [("gauss_4_1", "gauss_I"), ("square_q2", "gauss_I"), ("hexagon_q4", "gauss_I"),
             ("randpoly_q2", "gauss_I"), ("smooth_max", "gauss_I"), ("square_q4", "gauss_9_1")]
    worst_v, worst_s = 0.0, -math.inf
    for a, b in pairs:
        f, g = members[a], members[b]
        vals = [lp_first_variation(f, g, p).normalized for p in LADDER[:-1]]
        worst_v = max([worst_v] + [x - y for x, y in zip(vals, vals[1:])])
        sup = sup_ratio_variation(f, g)
        worst_s = max(worst_s, vals[-1] - sup)
    ok = worst_v <= 1e-6 and worst_s <= 1e-3
    acceptance("C5 Jensen monotonicity in p", ok,
               f"max decrease = {worst_v:.2e}, max dbar_32 - sup = {worst_s:.3g}")
    assert ok


def test_c06_mass_chain(acceptance, inequality_report):
    rows, bad = _failures(inequality_report, "mass_chain")
    ok = not bad
    acceptance("C6 mass nonincreasing in p", ok,
               f"{len(rows) - len(bad)}/{len(rows)} records" + (f"; {_worst(bad)}" if bad else ""))
    assert ok


def test_c07_mass_bound(acceptance, inequality_report):
    rows, bad = _failures(inequality_report, "mass_bound")
    ok = not bad
    acceptance("C7 mass bound J(E_p f) <= J(f)", ok,
               f"{len(rows) - len(bad)}/{len(rows)} records" + (f"; {_worst(bad)}" if bad else ""))
    assert ok


def test_c08_santalo(acceptance, inequality_report):
    rows, bad = _failures(inequality_report, "santalo")
    ok = not bad
    acceptance("C8 Santalo-type product", ok,
               f"{len(rows) - len(bad)}/{len(rows)} records" + (f"; {_worst(bad)}" if bad else ""))
    assert ok


def test_c09_ball_ratio(acceptance, inequality_report):
    rows, bad = _failures(inequality_report, "ball_ratio")
    ok = not bad
    acceptance("C9 ball volume-ratio bound", ok,
               f"{len(rows) - len(bad)}/{len(rows)} records" + (f"; {_worst(bad)}" if bad else ""))
    assert ok


def test_c10_gl_covariance(acceptance, members):
    rng = np.random.default_rng(10)
    Ts = []
    while len(Ts) < 5:
        T = np.eye(2) + 0.4 * rng.standard_normal((2, 2))
        if abs(np.linalg.det(T)) > 0.3:
            Ts.append(T)
    worst = 0.0
    for name in ("square_q2", "randpoly_q2"):
        f = members[name]
        for p in (1.0, 2.0, math.inf):
            base = solve_Ep(f, p).E_p.Q
            for T in Ts:
                got = solve_Ep(gl_image(f, T), p).E_p.Q
                worst = max(worst, nm.op_norm(got - T.T @ base @ T))
    ok = worst < 1e-3
    acceptance("C10 GL covariance", ok, f"max |Q_E(Tf) - T^T Q_E T| = {worst:.2e}")
    assert ok


def test_c11_kkt_stationarity(acceptance, inequality_report, members):
    rows, bad = _failures(inequality_report, "kkt")
    worst = max(r.lhs for r in rows)
    neg = kkt_residual(members["gauss_4_1"], 2.0, np.eye(2))
    ok = not bad and neg > 0.3
    acceptance("C11 KKT stationarity", ok,
               f"max residual at solutions = {worst:.2e}, wrong candidate = {neg:.3f}")
    assert ok


def test_c12_continuity(acceptance, corpus):
    out = []
    for m in corpus.members:
        if m.name in ("gauss_I", "square_q2"):
            out += check_continuity(m, p=2.0)
    bad = [r for r in out if not r.passed]
    decay = [r for r in out if r.name == "continuity_decay"]
    detail = "; ".join(f"{r.member}: last/first = {r.lhs / (10 * r.rhs):.3f}"
                       if r.rhs > 0 else f"{r.member}: {r.note}" for r in decay)
    ok = not bad
    acceptance("C12 continuity under perturbation", ok, detail)
    assert ok


def _c13_fenchel_young(u, dual_from):
    g = u.grid
    grad = nm.node_gradients(g, order=4)
    X = g.nodes()
    ok = np.all(np.abs(X) < dual_from * g.half_width, axis=-1) & np.all(np.isfinite(grad), axis=-1)
    x, y = X[ok], grad[ok]
    res = np.abs(g.values[ok] + u.conj(y) - np.sum(x * y, axis=-1))
    return float(res.max()), 10 * g.spacing ** 2, x, y


def _c13_dense(u, fn, x, y, rng, k=100):
    idx = rng.choice(len(y), size=min(k, len(y)), replace=False)
    star = nm.legendre_transform(u.grid, refine=True)
    R = u.grid.half_width
    vals = star(y[idx])
    ref = np.array([dense_conjugate(fn, yy, R) for yy in y[idx]])
    return float(np.max(np.abs(vals - ref))), 5 * u.grid.spacing ** 2


def test_c13_numerics_floor(acceptance):
    g = Quadratic(np.eye(2))
    J = nm.integrate(g.sample(g.box_radius(), nm.default_points(2)).like(
        np.exp(-g.sample(g.box_radius(), nm.default_points(2)).values)))
    err_J = abs(J / (2 * math.pi) - 1)
    rng = np.random.default_rng(13)
    q = Quadratic(np.diag([2.0, 0.5]))
    uq = GridPotential(q.sample(q.box_radius(), nm.default_points(2)))
    us = smooth_max_function().potential
    parts, ok = [f"J(gamma) rel err {err_J:.1e}"], err_J < 1e-6
    for label, u, fn in (("quad", uq, q), ("smooth_max", us, smooth_max_potential)):
        fy, fy_lim, x, y = _c13_fenchel_young(u, 0.8)
        dc, dc_lim = _c13_dense(u, fn, x, y, rng)
        ok = ok and fy < fy_lim and dc < dc_lim
        parts.append(f"{label}: FY {fy:.1e}/{fy_lim:.1e}, dense {dc:.1e}/{dc_lim:.1e}")
    acceptance("C13 numerics floor", ok, "; ".join(parts))
    assert ok


def test_c14_determinism(acceptance, tmp_path, capsys):
    docs = []
    for k in range(2):
        out = tmp_path / f"report{k}.json"
        main(["validate", "--corpus", "builtin", "--seed", "7", "--out", str(out)])
        d = json.loads(out.read_text())
        d["provenance"].pop("wall_time_ms")
        docs.append(json.dumps(d, sort_keys=True, indent=2))
    capsys.readouterr()
    ok = docs[0] == docs[1]
    acceptance("C14 deterministic validate reports", ok,
               f"{len(docs[0])} bytes compared (timing field removed)")
    assert ok
