"""Kernel backend selection.

The compiled Cython module is preferred; set ``DUALMAPPER_PURE_PYTHON=1`` to
force the numpy fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"

if os.environ.get("DUALMAPPER_PURE_PYTHON") != "1":
    try:
        from . import _kernels_cy as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
else:
    _impl = _kernels_py

count_points = _impl.count_points
render_segments = _impl.render_segments

__all__ = ["BACKEND", "count_points", "render_segments"]
