"""Numba acceleration shim.

Hot numeric kernels are decorated with :func:`maybe_njit`.  By default they
are compiled with numba (nopython, nogil, cached).  Setting the environment
variable ``PPAPEP_DISABLE_NUMBA=1`` (or the standard ``NUMBA_DISABLE_JIT=1``)
before import selects the pure Python/numpy fallback path; the package then
runs without compilation, just slower.  ``benchmarks/bench_kernels.py``
compares the two paths.
"""
from __future__ import annotations

import os

_DISABLE_VARS = ("PPAPEP_DISABLE_NUMBA", "NUMBA_DISABLE_JIT")


def _jit_wanted() -> bool:
    for var in _DISABLE_VARS:
        if os.environ.get(var, "").strip().lower() in {"1", "true", "yes"}:
            return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


NUMBA_ENABLED = _jit_wanted()

if NUMBA_ENABLED:
    from numba import njit as _njit

    def maybe_njit(func):
        return _njit(cache=True, nogil=True)(func)

else:

    def maybe_njit(func):
        return func


def python_impl(func):
    """The uncompiled implementation behind a possibly-jitted function."""
    return getattr(func, "py_func", func)
