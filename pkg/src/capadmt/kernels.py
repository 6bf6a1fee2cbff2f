"""Kernel backend selection.

The compiled extension is used when importable; otherwise the numpy twin.
Set ``CAPADMT_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("CAPADMT_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
        BACKEND = "python"

complex_normals = _impl.complex_normals
mixture_weights = _impl.mixture_weights
philox4x32 = _impl.philox4x32

__all__ = ["BACKEND", "complex_normals", "mixture_weights", "philox4x32"]
