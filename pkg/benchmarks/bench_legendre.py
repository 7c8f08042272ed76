"""Compare the compiled and numpy backends of the discrete Legendre transform.

Usage::

    python3 benchmarks/bench_legendre.py [--repeat 3]

Times one factorised transform per configuration with each backend and checks
that both agree to rounding.
"""

import argparse
import time

import numpy as np

from lpjohn import _legendre_py
from lpjohn.numerics import Grid, _transform

try:
    from lpjohn import _legendre
except ImportError:  # extension not built
    _legendre = None

CASES = [(1, 4097), (2, 129), (2, 257), (3, 65)]


def _quadratic_grid(dim, N):
    ax = np.linspace(-6.0, 6.0, N)
    X = np.stack(np.meshgrid(*([ax] * dim), indexing="ij"), axis=-1)
    return Grid(dim, 6.0, N, 0.5 * np.sum(X * X, axis=-1))


def _time(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def run(repeat=3):
    import lpjohn.numerics as nm

    rows = []
    for dim, N in CASES:
        g = _quadratic_grid(dim, N)
        dst = np.linspace(-6.0, 6.0, N)
        timings = {}
        results = {}
        for name, mod in (("python", _legendre_py), ("cython", _legendre)):
            if mod is None:
                continue
            saved = nm.legendre_lines
            nm.legendre_lines = mod.legendre_lines
            try:
                timings[name], results[name] = _time(
                    lambda: _transform(g.values, g.axis, dst, refine=True), repeat)
            finally:
                nm.legendre_lines = saved
        diff = (float(np.max(np.abs(results["python"] - results["cython"])))
                if len(results) == 2 else float("nan"))
        rows.append((dim, N, timings.get("python"), timings.get("cython"), diff))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _legendre is None:
        print("compiled extension not built; timing the numpy backend only")
    print(f"{'n':>2} {'N':>6} {'python [s]':>11} {'cython [s]':>11} {'speedup':>8} {'max diff':>10}")
    for dim, N, tp, tc, diff in run(args.repeat):
        sp = tp / tc if tp and tc else float("nan")
        tcs = f"{tc:11.4f}" if tc is not None else f"{'-':>11}"
        print(f"{dim:>2} {N:>6} {tp:11.4f} {tcs} {sp:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
