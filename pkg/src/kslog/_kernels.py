"""Kernel backend selection.

The compiled extension is used when it imported cleanly; otherwise the numpy
fallback takes over. Set KSLOG_PURE_PYTHON=1 to force the fallback (the
benchmark uses this to compare the two).
"""

from __future__ import annotations

import os

from kslog import _kernels_py

if os.environ.get("KSLOG_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from kslog import _native as _impl  # type: ignore[no-redef]
        BACKEND = "native"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

INF_GRID = int(_kernels_py.INF_GRID)
sample_states = _impl.sample_states
four_point_tally = _impl.four_point_tally
