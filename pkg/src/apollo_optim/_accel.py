"""Backend switch for the compiled kernels.

Kernels are written once as plain Python loops. When numba is importable and
``APOLLO_OPTIM_DISABLE_NUMBA`` is unset (or ``0``), they are compiled with
``numba.njit``; otherwise every call site uses the vectorised numpy path.
"""

from __future__ import annotations

import os

ENV_FLAG = "APOLLO_OPTIM_DISABLE_NUMBA"


def _numba_requested() -> bool:
    return os.environ.get(ENV_FLAG, "0").strip().lower() in ("", "0", "false", "no")


try:
    if not _numba_requested():
        raise ImportError("numba disabled via " + ENV_FLAG)
    import numba

    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False


def njit(func):
    """Compile ``func`` with numba when available, else return it untouched."""
    if HAVE_NUMBA:
        return numba.njit(cache=True, nogil=True)(func)
    return func


def backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"
