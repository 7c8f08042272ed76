"""Pure numpy fallback for the compiled Legendre kernel."""

import numpy as np

# bytes of the (chunk, ny, nx) temporary
_CHUNK_BYTES = 64 * 2**20


def legendre_lines(values, x, y, refine=False):
    """For every row ``l`` return ``out[l, j] = max_k (x[k] * y[j] - values[l, k])``.

    With ``refine`` the discrete maximum is corrected by the vertex of the
    parabola through the argmax and its two neighbours (``x`` equispaced).
    """
    values = np.ascontiguousarray(values, dtype=np.float64)
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    nlines, nx = values.shape
    if x.shape[0] != nx:
        raise ValueError("x does not match the line length")
    ny = y.shape[0]
    out = np.empty((nlines, ny))
    xy = np.outer(y, x)  # (ny, nx)
    chunk = max(1, _CHUNK_BYTES // (8 * nx * ny))
    for start in range(0, nlines, chunk):
        block = values[start:start + chunk]
        cand = xy[None, :, :] - block[:, None, :]
        kb = np.argmax(cand, axis=2)
        best = np.take_along_axis(cand, kb[..., None], axis=2)[..., 0]
        if refine:
            inner = (kb > 0) & (kb < nx - 1) & np.isfinite(best)
            km = np.clip(kb - 1, 0, nx - 1)
            kp = np.clip(kb + 1, 0, nx - 1)
            cm = np.take_along_axis(cand, km[..., None], axis=2)[..., 0]
            cp = np.take_along_axis(cand, kp[..., None], axis=2)[..., 0]
            with np.errstate(invalid="ignore", divide="ignore"):
                den = 2.0 * best - cm - cp
                ok = inner & np.isfinite(cm) & np.isfinite(cp) & (den > 0)
                corr = np.where(ok, (cp - cm) ** 2 / (8.0 * np.where(ok, den, 1.0)), 0.0)
            best = best + corr
        out[start:start + chunk] = best
    return out
