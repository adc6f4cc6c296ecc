"""Numba switch.

Hot kernels are written twice: a loop version compiled with ``numba.njit``
and a vectorised numpy version. Which one is bound at import time depends on
numba being importable and on the ``DGPCL_DISABLE_NUMBA`` environment flag
(``1``/``true``/``yes`` selects the numpy path).
"""
import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is optional
    numba = None
    HAVE_NUMBA = False

DISABLED = os.environ.get("DGPCL_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")
USE_NUMBA = HAVE_NUMBA and not DISABLED


# reassociation lets reductions vectorise; NaN/inf semantics are kept
FAST_FLAGS = {"reassoc", "contract", "arcp"}


def njit(fn=None, *, fast=False):
    """Compile ``fn`` in nopython mode when numba is around, else return it as is."""
    if fn is None:
        return lambda f: njit(f, fast=fast)
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True, fastmath=FAST_FLAGS if fast else False)(fn)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
