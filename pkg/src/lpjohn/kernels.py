"""Backend selection for the hot kernels.

The compiled extension ``lpjohn._legendre`` is used when it was built;
otherwise, or when the environment variable ``LPJOHN_PURE_PYTHON`` is set to
a non-empty value other than ``0``, the numpy implementation is used.
"""

import os

from . import _legendre_py

_force_py = os.environ.get("LPJOHN_PURE_PYTHON", "") not in ("", "0")

BACKEND = "python"
legendre_lines = _legendre_py.legendre_lines

if not _force_py:
    try:
        from ._legendre import legendre_lines  # noqa: F811
        BACKEND = "cython"
    except ImportError:  # extension not built
        pass

__all__ = ["BACKEND", "legendre_lines"]
