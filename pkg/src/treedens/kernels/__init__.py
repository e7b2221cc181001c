"""Kernel dispatch.

The numba backend is used when numba is importable, unless the environment
variable ``TREEDENS_DISABLE_NUMBA`` is set to anything other than ``""``/``"0"``.
The choice is made once at import time.
"""

from __future__ import annotations

import os

from . import numpy_impl

_disabled = os.environ.get("TREEDENS_DISABLE_NUMBA", "") not in ("", "0")

if _disabled:
    numba_impl = None
else:
    try:
        from . import numba_impl
    except ImportError:  # pragma: no cover - numba is a declared dependency
        numba_impl = None

backend = numba_impl if numba_impl is not None else numpy_impl
BACKEND_NAME = "numba" if numba_impl is not None else "numpy"

bin_cells = backend.bin_cells
mi_from_counts = backend.mi_from_counts
pair_mi_batch = backend.pair_mi_batch
lookup_sorted = backend.lookup_sorted

__all__ = [
    "BACKEND_NAME",
    "bin_cells",
    "lookup_sorted",
    "mi_from_counts",
    "numba_impl",
    "numpy_impl",
    "pair_mi_batch",
]
