"""JIT switch for the hot kernels.

Kernels in :mod:`inversefilter.kernels` come in two flavours: explicit loops
compiled with numba, and vectorised numpy. Which one the public dispatchers
use is decided once, at import time:

* ``INVERSEFILTER_DISABLE_JIT=1`` forces the numpy path;
* the numpy path is also used when numba cannot be imported.

Both paths are always importable so tests and the benchmark can compare them.
"""

import os

_FLAG = "INVERSEFILTER_DISABLE_JIT"

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

HAVE_NUMBA = _numba is not None
JIT_ENABLED = HAVE_NUMBA and os.environ.get(_FLAG, "").strip().lower() not in (
    "1",
    "true",
    "yes",
    "on",
)


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity otherwise.

    The loop kernels are decorated unconditionally; when numba is missing they
    still run (slowly) as plain Python, which keeps the equivalence tests
    meaningful.
    """
    if HAVE_NUMBA:
        kwargs.setdefault("cache", True)
        return _numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrap(func):
        return func

    return wrap


def backend_name():
    return "numba" if JIT_ENABLED else "numpy"
