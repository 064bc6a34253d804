"""Kernel backend selection.

Hot numeric loops (entropy, union-support KL, moment reduction, boosted-tree
growth) are compiled with numba by default. Set ``VERITRACE_NO_NUMBA=1`` to
select the pure-numpy fallback; the fallback is also chosen automatically
when numba is unavailable. ``benchmarks/bench_kernels.py`` compares the two.
"""
from __future__ import annotations

import os

from . import numpy_impl

ID_PAD = numpy_impl.ID_PAD


def _pick_backend():
    if os.environ.get("VERITRACE_NO_NUMBA", "").strip().lower() in {"1", "true", "yes"}:
        return numpy_impl
    try:
        from . import numba_impl
    except ImportError:
        return numpy_impl
    return numba_impl


_impl = _pick_backend()

BACKEND = _impl.BACKEND
entropy_rows = _impl.entropy_rows
kl_aligned = _impl.kl_aligned
moments_columns = _impl.moments_columns
grow_tree = _impl.grow_tree
predict_forest = _impl.predict_forest


def backend_name() -> str:
    """Name of the active kernel backend ("numba" or "numpy")."""
    return BACKEND
