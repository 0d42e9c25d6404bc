"""Scalar Kalman log-likelihood over a grid of observation gains.

Two twins per quantity: ``*_loop`` (numba when available) and ``*_numpy``
(vectorised over replicates and grid). Both take

* ``y`` or ``(x, a)``: ``(M, N)`` data for ``M`` replicates (``x`` is ``(M, N+1)``),
* ``cs``: ``(G,)`` candidate gains,

and return an ``(M, G)`` array of log-likelihoods. The adversary's prior is
``N(0, S0)``; for the inverse likelihood our prior on its initial estimate
is exact (``Sigmabar_0 = 0``).
"""

import math

import numpy as np

from .._accel import njit

LOG2PI = math.log(2.0 * math.pi)

PHI_IDENTITY = 0
PHI_INV_ONE_PLUS = 1


@njit
def classic_loglik_loop(y, cs, A, Q, R, S0):
    # the covariance path does not depend on the data: compute it once per gain
    M, N = y.shape
    G = cs.shape[0]
    out = np.empty((M, G))
    S = np.empty(N)
    logS = np.empty(N)
    gain = np.empty(N)
    for g in range(G):
        C = cs[g]
        P = S0
        for k in range(N):
            Pp = A * A * P + Q
            S[k] = C * C * Pp + R
            logS[k] = math.log(S[k])
            gain[k] = Pp * C / S[k]
            P = Pp * (1.0 - gain[k] * C)
        for m in range(M):
            mean = 0.0
            ll = 0.0
            for k in range(N):
                mp = A * mean
                e = y[m, k] - C * mp
                ll -= 0.5 * (LOG2PI + logS[k] + e * e / S[k])
                mean = mp + gain[k] * e
            out[m, g] = ll
    return out


def classic_loglik_numpy(y, cs, A, Q, R, S0):
    M, N = y.shape
    C = np.asarray(cs, dtype=float)[None, :]
    mean = np.zeros((M, C.size))
    P = np.full_like(C, S0)
    ll = np.zeros((M, C.size))
    for k in range(N):
        mp = A * mean
        Pp = A * A * P + Q
        S = C * C * Pp + R
        e = y[:, k : k + 1] - C * mp
        ll -= 0.5 * (LOG2PI + np.log(S) + e * e / S)
        gain = Pp * C / S
        mean = mp + gain * e
        P = Pp * (1.0 - gain * C)
    return ll


@njit
def inverse_loglik_loop(x, a, cs, A, Q, R, sigma2, S0, phi):
    M, N = a.shape
    G = cs.shape[0]
    out = np.empty((M, G))
    Ab = np.empty(N)
    Fb = np.empty(N)
    Cb = np.empty(N)
    S = np.empty(N)
    logS = np.empty(N)
    gain = np.empty(N)
    for g in range(G):
        C = cs[g]
        P = S0
        Pb = 0.0
        for k in range(N):
            # adversary covariance recursion, gain psi_{k+1}
            Pp = A * A * P + Q
            K = C * C * Pp + R
            psi = Pp * C / K
            P = Pp * (1.0 - psi * C)
            Ab[k] = (1.0 - psi * C) * A
            Fb[k] = psi * C
            Qb = psi * psi * R
            Cb[k] = 1.0 if phi == PHI_IDENTITY else 1.0 / (1.0 + P)
            # our covariance on the adversary's estimate
            Pbp = Ab[k] * Ab[k] * Pb + Qb
            S[k] = Cb[k] * Cb[k] * Pbp + sigma2
            logS[k] = math.log(S[k])
            gain[k] = Pbp * Cb[k] / S[k]
            Pb = Pbp * (1.0 - gain[k] * Cb[k])
        for m in range(M):
            mean = 0.0
            ll = 0.0
            for k in range(N):
                mp = Ab[k] * mean + Fb[k] * x[m, k + 1]
                e = a[m, k] - Cb[k] * mp
                ll -= 0.5 * (LOG2PI + logS[k] + e * e / S[k])
                mean = mp + gain[k] * e
            out[m, g] = ll
    return out


def inverse_loglik_numpy(x, a, cs, A, Q, R, sigma2, S0, phi):
    M, N = a.shape
    C = np.asarray(cs, dtype=float)
    P = np.full(C.shape, float(S0))
    mean = np.zeros((M, C.size))
    Pb = np.zeros(C.shape)
    ll = np.zeros((M, C.size))
    for k in range(N):
        Pp = A * A * P + Q
        K = C * C * Pp + R
        psi = Pp * C / K
        P = Pp * (1.0 - psi * C)
        Ab = (1.0 - psi * C) * A
        Fb = psi * C
        Qb = psi * psi * R
        Cb = np.ones_like(P) if phi == PHI_IDENTITY else 1.0 / (1.0 + P)
        mp = Ab * mean + Fb * x[:, k + 1 : k + 2]
        Pbp = Ab * Ab * Pb + Qb
        S = Cb * Cb * Pbp + sigma2
        e = a[:, k : k + 1] - Cb * mp
        ll -= 0.5 * (LOG2PI + np.log(S) + e * e / S)
        gain = Pbp * Cb / S
        mean = mp + gain * e
        Pb = Pbp * (1.0 - gain * Cb)
    return ll
