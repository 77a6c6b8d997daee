"""JIT switch for the hot kernels.

Kernels are written once and compiled with numba when it is importable and
``PSLB_DISABLE_NUMBA`` is unset (or ``0``).  Otherwise the very same source runs
as plain Python over numpy arrays, which is slow but bit-for-bit equivalent
and handy for debugging.
"""

import os

_flag = os.environ.get("PSLB_DISABLE_NUMBA", "0").strip().lower()
_disabled = _flag not in ("", "0", "false", "no")

try:
    if _disabled:
        raise ImportError
    import numba as _numba
except ImportError:  # pragma: no cover - depends on environment
    _numba = None

NUMBA_ENABLED = _numba is not None


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if NUMBA_ENABLED:
        kwargs.setdefault("cache", True)
        return _numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrap(fn):
        return fn

    return wrap


def backend():
    return "numba" if NUMBA_ENABLED else "python"
