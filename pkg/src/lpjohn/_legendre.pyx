# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel for the direct discrete Legendre transform along one axis."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, isfinite

cnp.import_array()


def legendre_lines(const double[:, ::1] values, const double[::1] x, const double[::1] y,
                   bint refine=False):
    """For every row ``l`` return ``out[l, j] = max_k (x[k] * y[j] - values[l, k])``.

    Entries equal to ``+inf`` never win the maximum.  With ``refine`` the
    discrete maximum is corrected by the vertex of the parabola through the
    argmax and its two neighbours (``x`` must be equispaced).
    """
    cdef Py_ssize_t nlines = values.shape[0]
    cdef Py_ssize_t nx = values.shape[1]
    cdef Py_ssize_t ny = y.shape[0]
    cdef Py_ssize_t l, j, k, kb
    cdef double best, cand, yj, cm, cp, den
    out_arr = np.empty((nlines, ny), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    if x.shape[0] != nx:
        raise ValueError("x does not match the line length")
    with nogil:
        for l in range(nlines):
            for j in range(ny):
                yj = y[j]
                best = -INFINITY
                kb = 0
                for k in range(nx):
                    cand = x[k] * yj - values[l, k]
                    if cand > best:
                        best = cand
                        kb = k
                if refine and kb > 0 and kb < nx - 1 and isfinite(best):
                    cm = x[kb - 1] * yj - values[l, kb - 1]
                    cp = x[kb + 1] * yj - values[l, kb + 1]
                    den = 2.0 * best - cm - cp
                    if isfinite(cm) and isfinite(cp) and den > 0.0:
                        best = best + (cp - cm) * (cp - cm) / (8.0 * den)
                out[l, j] = best
    return out_arr
