"""Kernel backend selection: compiled extension if available, else Python.

Set GRAINLAB_PURE_PYTHON=1 to force the reference implementation (used by
the backend-comparison tests and the benchmark).
"""

import os

from . import _kernels_py
from ._kernels_py import BudgetExceededError  # noqa: F401 (re-export)

if os.environ.get("GRAINLAB_PURE_PYTHON"):
    _impl = _kernels_py
else:
    try:
        from . import _fastkern as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = _impl.BACKEND

box_clipped_stats = _impl.box_clipped_stats
box_local_subsets = _impl.box_local_subsets
box_exposed = _impl.box_exposed
poly_clipped_stats = _impl.poly_clipped_stats
poly_chi_local = _impl.poly_chi_local
poly_exposed = _impl.poly_exposed


def get_backends():
    """Both backends (for benchmarks); compiled one may be absent."""
    impls = {"python": _kernels_py}
    try:
        from . import _fastkern
        impls["cython"] = _fastkern
    except ImportError:
        pass
    return impls
