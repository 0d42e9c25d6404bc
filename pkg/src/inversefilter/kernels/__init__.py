"""Hot loops with a numba and a numpy implementation each.

The public names below pick one at import time (see ``inversefilter._accel``);
the twins stay importable for equivalence tests and the benchmark.
"""

import numpy as np

from .._accel import JIT_ENABLED, backend_name
from . import particle_hmm, scalar_kalman
from .scalar_kalman import PHI_IDENTITY, PHI_INV_ONE_PLUS

PHI_CODES = {"identity": PHI_IDENTITY, "inv-one-plus": PHI_INV_ONE_PLUS}


def _f(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def classic_loglik_grid(y, cs, A, Q, R, S0, backend=None):
    y = _f(np.atleast_2d(y))
    cs = _f(np.atleast_1d(cs))
    if (backend or backend_name()) == "numba":
        return scalar_kalman.classic_loglik_loop(y, cs, float(A), float(Q), float(R), float(S0))
    return scalar_kalman.classic_loglik_numpy(y, cs, float(A), float(Q), float(R), float(S0))


def inverse_loglik_grid(x, a, cs, A, Q, R, sigma2, S0, phi="identity", backend=None):
    x = _f(np.atleast_2d(x))
    a = _f(np.atleast_2d(a))
    cs = _f(np.atleast_1d(cs))
    args = (x, a, cs, float(A), float(Q), float(R), float(sigma2), float(S0), PHI_CODES[phi])
    if (backend or backend_name()) == "numba":
        return scalar_kalman.inverse_loglik_loop(*args)
    return scalar_kalman.inverse_loglik_numpy(*args)


def particle_loglik_grid(P, Bs, x, a, g, thresholds, confusion, pi0, U, Ur, backend=None):
    args = (
        _f(P), _f(Bs), np.ascontiguousarray(x, dtype=np.int64), np.ascontiguousarray(a, dtype=np.int64),
        _f(g), _f(np.atleast_1d(thresholds)), _f(confusion), _f(pi0), _f(U), _f(Ur),
    )
    if (backend or backend_name()) == "numba":
        return particle_hmm.particle_loglik_loop(*args)
    return particle_hmm.particle_loglik_numpy(*args)


__all__ = [
    "JIT_ENABLED",
    "backend_name",
    "classic_loglik_grid",
    "inverse_loglik_grid",
    "particle_loglik_grid",
]
