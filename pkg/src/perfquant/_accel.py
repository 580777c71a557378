"""Numba acceleration toggle.

The hot numeric kernels in :mod:`perfquant._kernels` are compiled with numba
when it is importable.  Setting the environment variable
``PERFQUANT_DISABLE_NUMBA=1`` (before import) forces the pure-numpy fallback
path instead; ``benchmarks/bench_kernels.py`` compares the two.
"""

import os

ENV_FLAG = "PERFQUANT_DISABLE_NUMBA"

try:
    from numba import njit  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None
    HAVE_NUMBA = False

_disabled = os.environ.get(ENV_FLAG, "").strip().lower() in ("1", "true", "yes")
NUMBA_ENABLED = HAVE_NUMBA and not _disabled


def using_numba():
    """True when the jitted kernel path is active in this process."""
    return NUMBA_ENABLED


def jit_kernel(func):
    """Compile ``func`` with numba when enabled, else return it unchanged."""
    if NUMBA_ENABLED:
        return njit(cache=True)(func)
    return func
