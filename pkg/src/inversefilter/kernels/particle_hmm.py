"""Particle estimate of the inverse-HMM log-likelihood over a grid of observation kernels.

Used where the exact belief tree is out of reach (long horizons). The action
channel is a quantizer on ``g' pi`` composed with a confusion matrix. The
uniforms ``U`` (observation draws, ``(N, n)``) and ``Ur`` (systematic
resampling offsets, ``(N,)``) are inputs, so every grid point sees the same
random numbers and the twins agree draw for draw.
"""

import math

import numpy as np

from .._accel import njit

ESS_FRACTION = 0.5


@njit
def particle_loglik_loop(P, Bs, x, a, g, thresholds, confusion, pi0, U, Ur):
    Gn, X, Y = Bs.shape
    N = a.shape[0]
    n = U.shape[1]
    out = np.empty(Gn)
    pis = np.empty((n, X))
    new = np.empty((n, X))
    w = np.empty(n)
    cdf = np.empty(n)
    idx = np.empty(n, dtype=np.int64)
    pred = np.empty(X)
    for gi in range(Gn):
        B = Bs[gi]
        for i in range(n):
            for s in range(X):
                pis[i, s] = pi0[s]
            w[i] = 1.0 / n
        ll = 0.0
        dead = False
        for k in range(N):
            xk = x[k + 1]
            trans = P[x[k], xk]
            tot = 0.0
            for i in range(n):
                # y ~ B[xk, .] by inverse cdf
                u = U[k, i]
                c = 0.0
                y = Y - 1
                for j in range(Y):
                    c += B[xk, j]
                    if u < c:
                        y = j
                        break
                z = 0.0
                for s in range(X):
                    acc = 0.0
                    for r in range(X):
                        acc += pis[i, r] * P[r, s]
                    pred[s] = acc * B[s, y]
                    z += pred[s]
                score = 0.0
                if z > 1e-300:
                    for s in range(X):
                        new[i, s] = pred[s] / z
                        score += g[s] * new[i, s]
                    lvl = 0
                    for t in range(thresholds.shape[0]):
                        if score >= thresholds[t]:
                            lvl += 1
                    w[i] *= confusion[lvl, a[k]] * trans
                else:
                    for s in range(X):
                        new[i, s] = pis[i, s]
                    w[i] = 0.0
                tot += w[i]
            if not tot > 1e-300:
                dead = True
                break
            ll += math.log(tot)
            ss = 0.0
            for i in range(n):
                w[i] /= tot
                ss += w[i] * w[i]
            if 1.0 / ss < ESS_FRACTION * n:
                c = 0.0
                for i in range(n):
                    c += w[i]
                    cdf[i] = c
                cdf[n - 1] = 1.0
                j = 0
                for i in range(n):
                    uu = (Ur[k] + i) / n
                    while j < n - 1 and cdf[j] <= uu:
                        j += 1
                    idx[i] = j
                for i in range(n):
                    for s in range(X):
                        pis[i, s] = new[idx[i], s]
                    w[i] = 1.0 / n
            else:
                for i in range(n):
                    for s in range(X):
                        pis[i, s] = new[i, s]
        out[gi] = -np.inf if dead else ll
    return out


def particle_loglik_numpy(P, Bs, x, a, g, thresholds, confusion, pi0, U, Ur):
    Gn, X, Y = Bs.shape
    N = a.shape[0]
    n = U.shape[1]
    pis = np.broadcast_to(pi0, (Gn, n, X)).copy()
    w = np.full((Gn, n), 1.0 / n)
    ll = np.zeros(Gn)
    alive = np.ones(Gn, dtype=bool)
    rows = np.arange(Gn)[:, None]
    for k in range(N):
        xk = x[k + 1]
        cdf = np.cumsum(Bs[:, xk, :], axis=1)  # (Gn, Y)
        y = np.minimum((U[k][None, :, None] >= cdf[:, None, :]).sum(axis=2), Y - 1)  # (Gn, n)
        pred = (pis @ P) * np.take_along_axis(Bs.transpose(0, 2, 1), y[:, :, None], axis=1)
        z = pred.sum(axis=2)
        ok = z > 1e-300
        new = np.where(ok[:, :, None], pred / np.where(ok, z, 1.0)[:, :, None], pis)
        lvl = (new @ g)[:, :, None] >= thresholds[None, None, :]
        lvl = lvl.sum(axis=2)
        w = np.where(ok, w * confusion[lvl, a[k]] * P[x[k], xk], 0.0)
        tot = w.sum(axis=1)
        alive &= tot > 1e-300
        tot = np.where(alive, tot, 1.0)
        ll += np.log(tot)
        w = w / tot[:, None]
        ess = 1.0 / (w**2).sum(axis=1)
        rs = ess < ESS_FRACTION * n
        if np.any(rs):
            c = np.cumsum(w[rs], axis=1)
            c[:, -1] = 1.0
            uu = (Ur[k] + np.arange(n)) / n
            idx = np.minimum((uu[None, :, None] >= c[:, None, :]).sum(axis=2), n - 1)
            new[rs] = np.take_along_axis(new[rs], idx[:, :, None], axis=1)
            w[rs] = 1.0 / n
        pis = new
    return np.where(alive, ll, -np.inf)
