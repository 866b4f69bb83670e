"""Backend selection for the hot loops.

Kernels that dominate runtime (the convolution gather/scatter loops)
have a numba implementation and a pure-numpy one with identical results.
``PADKIT_NUMBA=0`` forces the numpy path; otherwise numba is used when it
imports cleanly.
"""

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def numba_enabled() -> bool:
    flag = os.environ.get("PADKIT_NUMBA", "1").strip().lower()
    return HAVE_NUMBA and flag not in ("0", "false", "no", "off")


USE_NUMBA = numba_enabled()


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if HAVE_NUMBA:
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)

    def wrap(fn):
        return fn

    if args and callable(args[0]):
        return args[0]
    return wrap
