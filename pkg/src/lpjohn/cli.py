"""Command-line front end.

Exit codes: 0 success, 1 suite failure, 2 invalid input, 3 numerical failure.
The default resolution can be overridden with the ``LPJOHN_RESOLUTION``
environment variable (a positive odd integer).
"""

import argparse
import csv
from dataclasses import dataclass, field
import io
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from . import numerics as nm
from .functions import FunctionError, InadmissibleError, from_spec
from .solver import SolverError, solve_Ep
from .validation import (CorpusError, builtin_corpus, corpus_from_file, parse_p, run_suite)
from .variation import ExcludedMassError, FDContext, VariationReport, lp_first_variation

SCHEMA_VERSION = "1.0"
ENV_RESOLUTION = "LPJOHN_RESOLUTION"

EXIT_OK, EXIT_SUITE, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


class InputError(ValueError):
    pass


@dataclass
class ResultDocument:
    command: str
    input_spec: object
    outputs: object
    provenance: dict = field(default_factory=dict)
    schema_version: str = SCHEMA_VERSION

    def to_dict(self):
        return {"schema_version": self.schema_version, "command": self.command,
                "input_spec": self.input_spec, "outputs": self.outputs,
                "provenance": self.provenance}

    def to_json(self):
        return json.dumps(_clean(self.to_dict()), indent=2, sort_keys=True, allow_nan=False)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        if "schema_version" not in d:
            raise InputError("result document has no schema_version")
        return cls(d["command"], d["input_spec"], d["outputs"], d.get("provenance", {}),
                   d["schema_version"])


# ------------------------------------------------------------------ helpers

def _clean(obj):
    """Plain JSON: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def _resolution(arg):
    if arg is not None:
        val, src = arg, "--resolution"
    elif os.environ.get(ENV_RESOLUTION):
        val, src = os.environ[ENV_RESOLUTION], ENV_RESOLUTION
    else:
        return None
    try:
        r = int(val)
    except ValueError:
        raise InputError(f"{src} must be a positive odd integer, got {val!r}") from None
    if r <= 0 or r % 2 == 0:
        raise InputError(f"{src} must be a positive odd integer, got {val!r}")
    return r


def _load_spec(path):
    try:
        with open(path) as fh:
            spec = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from None
    try:
        return spec, from_spec(spec)
    except FunctionError as exc:
        raise InputError(f"invalid function spec in {path}: {exc}") from None


def _p(text):
    try:
        return parse_p(text)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _p_list(text):
    items = [t for t in (text or "").split(",") if t.strip()]
    if not items:
        raise InputError("--p-list is empty")
    return [_p(t.strip()) for t in items]


def _fmt_p(p):
    return "inf" if math.isinf(p) else f"{p:g}"


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        return
    with open(path, "w") as fh:
        fh.write(text if text.endswith("\n") else text + "\n")


def _ms(t0):
    return int(round(1000 * (time.perf_counter() - t0)))


def _summary_line(r):
    if r.degenerate:
        return f"p={_fmt_p(r.p)} degenerate: mass 0 ({r.note})"
    ev = np.linalg.eigvalsh(r.Q_bar)
    return (f"p={_fmt_p(r.p)} Qbar eig=[{', '.join(f'{v:.6g}' for v in ev)}] "
            f"delta_bar={r.delta_bar:.10g} mass={r.mass:.10g} "
            f"residual={r.kkt_residual:.3g} iterations={r.iterations}")


# ----------------------------------------------------------------- commands

def cmd_solve(args):
    t0 = time.perf_counter()
    res = _resolution(args.resolution)
    spec, f = _load_spec(args.input)
    p = _p(args.p)
    r = solve_Ep(f, p, tol=args.tol, resolution=res)
    prov = {"resolution": res, "seed": args.seed, "tolerances": {"kkt": args.tol},
            "version": __version__, "wall_time_ms": _ms(t0)}
    doc = ResultDocument("solve", spec, r.to_dict(), prov)
    if args.out:
        _write(args.out, doc.to_json())
    print(_summary_line(r))
    return EXIT_OK if r.converged else EXIT_NUMERIC


def cmd_sweep(args):
    res = _resolution(args.resolution)
    spec, f = _load_spec(args.input)
    ps = _p_list(args.p_list)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["p", "mass", "delta_bar", "residual", "iterations", "status"])
    code = EXIT_OK
    for p in ps:
        try:
            r = solve_Ep(f, p, tol=args.tol, resolution=res)
            status = "degenerate" if r.degenerate else ("ok" if r.converged else "not_converged")
            if not r.converged:
                code = EXIT_NUMERIC
            w.writerow([_fmt_p(p), repr(float(r.mass)), repr(float(r.delta_bar)),
                        repr(float(r.kkt_residual)), r.iterations, status])
        except (SolverError, nm.NumericsError) as exc:
            code = EXIT_NUMERIC
            w.writerow([_fmt_p(p), "nan", "nan", "nan", 0, f"error: {exc}"])
    _write(args.out, buf.getvalue())
    return code


def cmd_validate(args):
    t0 = time.perf_counter()
    if args.corpus == "builtin":
        corpus = builtin_corpus(seed=args.seed)
    elif os.path.isfile(args.corpus):
        try:
            corpus = corpus_from_file(args.corpus)
        except (CorpusError, FunctionError) as exc:
            raise InputError(str(exc)) from None
    else:
        raise InputError(f"unknown corpus {args.corpus!r} (use 'builtin' or a JSON file)")
    ladder = _p_list(args.p_ladder) if args.p_ladder else None
    checks = args.checks.split(",") if args.checks else None
    report = run_suite(corpus, ladder, seed=args.seed, corrupt=args.corrupt_solver, checks=checks)
    prov = {"resolution": None, "seed": args.seed,
            "tolerances": {"closed_form": 1e-6, "solver": 1e-4, "kkt": 1e-5,
                           "difference_quotient": 2e-2},
            "version": __version__, "wall_time_ms": _ms(t0)}
    doc = ResultDocument("validate", {"corpus": args.corpus}, report.to_dict(), prov)
    if args.out:
        _write(args.out, doc.to_json())
    if args.csv:
        _write(args.csv, report.to_csv())
    s = report.summary()
    print(f"{s['passed']}/{s['records']} records pass, {s['failed']} fail")
    for r in report.failures[: args.show_failures]:
        print(f"  FAIL {r.name} [{r.member}, p={_fmt_p(r.p)}] lhs={r.lhs:.6g} rhs={r.rhs:.6g}"
              + (f" ({r.note})" if r.note else ""))
    return EXIT_OK if report.passed else EXIT_SUITE


def cmd_variation(args):
    t0 = time.perf_counter()
    res = _resolution(args.resolution)
    fspec, f = _load_spec(args.f)
    gspec, g = _load_spec(args.g)
    if f.dim != g.dim:
        raise InputError("f and g have different dimensions")
    p = _p(args.p)
    try:
        rep = lp_first_variation(f, g, p, resolution=res)
    except InadmissibleError as exc:
        # the defining integral diverges: the variation is +inf
        rep = VariationReport(p, math.inf, math.inf, math.nan, 0, 0.0)
        print(f"note: {exc}", file=sys.stderr)
        if args.oracle:
            raise InputError("--oracle needs an admissible pair") from None
    out = {"variation": rep.to_dict()}
    line = f"p={_fmt_p(p)} delta_bar={rep.normalized:.10g}"
    if math.isfinite(p):
        line += f" delta_J={rep.delta_Jp:.10g}"
    if args.oracle:
        if math.isinf(p):
            raise InputError("--oracle needs a finite p")
        ctx = FDContext(f, g, p, t_max=args.t, points_per_axis=args.oracle_points)
        fd = 2 * ctx.quotient(args.t / 2) - ctx.quotient(args.t)
        gap = abs(fd - rep.delta_Jp) / abs(rep.delta_Jp)
        out["oracle"] = {"difference_quotient": fd, "t": args.t, "relative_gap": gap,
                         "points_per_axis": ctx.N}
        line += f" fd={fd:.10g} gap={gap:.3g}"
    prov = {"resolution": res, "seed": None, "tolerances": {"difference_quotient": 2e-2},
            "version": __version__, "wall_time_ms": _ms(t0)}
    doc = ResultDocument("variation", {"f": fspec, "g": gspec}, out, prov)
    if args.out:
        _write(args.out, doc.to_json())
    print(line)
    return EXIT_OK


# --------------------------------------------------------------------- main

def build_parser():
    ap = argparse.ArgumentParser(prog="lpjohn", description="L_p John ellipsoids of "
                                 "log-concave functions")
    ap.add_argument("--version", action="version", version=f"lpjohn {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="L_p John ellipsoid of one function")
    s.add_argument("--input", required=True, help="function spec (JSON)")
    s.add_argument("--p", required=True, help="p >= 1 or 'inf'")
    s.add_argument("--resolution", help="positive odd integer")
    s.add_argument("--tol", type=float, default=1e-9)
    s.add_argument("--out")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("sweep", help="mass and delta_bar along a list of p (CSV)")
    s.add_argument("--input", required=True)
    s.add_argument("--p-list", required=True, help="comma list, 'inf' allowed")
    s.add_argument("--out", help="CSV path (default stdout)")
    s.add_argument("--resolution")
    s.add_argument("--tol", type=float, default=1e-9)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("validate", help="run the inequality suite")
    s.add_argument("--corpus", default="builtin", help="'builtin' or a corpus JSON file")
    s.add_argument("--p-ladder", help="comma list (default 1,1.5,2,4,8,16,32,inf)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--checks", help="comma subset of solver,chain,bound,santalo,ball,"
                   "continuity,variation")
    s.add_argument("--out", help="report JSON path")
    s.add_argument("--csv", help="flat CSV path")
    s.add_argument("--corrupt-solver", action="store_true",
                   help="negative control: perturb every solver output by 10%%")
    s.add_argument("--show-failures", type=int, default=20)
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("variation", help="first variation delta J_p(f, g)")
    s.add_argument("--f", required=True)
    s.add_argument("--g", required=True)
    s.add_argument("--p", required=True)
    s.add_argument("--oracle", action="store_true", help="also run the difference quotient")
    s.add_argument("--t", type=float, default=0.005, help="difference-quotient step")
    s.add_argument("--oracle-points", type=int, default=None)
    s.add_argument("--resolution")
    s.add_argument("--out")
    s.set_defaults(func=cmd_variation)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (InputError, FunctionError, CorpusError, InadmissibleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ExcludedMassError, SolverError, nm.NumericsError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
