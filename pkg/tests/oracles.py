"""Brute-force reference computations used by the test suite.

Everything here enumerates hidden sequences or integrates on a grid and
shares no code path with the library beyond the plain HMM filter step.
"""

from itertools import product

import numpy as np
from scipy import integrate, stats


def _hmm_step(pi, y, P, B):
    un = (pi @ P) * B[:, y]
    z = un.sum()
    return (un / z if z > 0 else None), z


def enumerate_inverse_hmm(model, xs, actions):
    """Return ``(posterior mean of pi_N, likelihood p(x_{1:N}, a_{1:N} | x_0))`` by summing over ``Y^N``."""
    P, B, G = model.P, model.B, model.channel
    N = len(actions)
    total = 0.0
    acc = np.zeros(P.shape[0])
    for ys in product(range(B.shape[1]), repeat=N):
        pi = model.pi0.copy()
        w = 1.0
        for k, y in enumerate(ys):
            w *= P[xs[k], xs[k + 1]] * B[xs[k + 1], y]
            if w == 0:
                break
            pi, _ = _hmm_step(pi, y, P, B)
            w *= G.likelihood(pi[None, :])[0, actions[k]]
        if w > 0:
            total += w
            acc += w * pi
    mean = acc / total if total > 0 else np.full(P.shape[0], np.nan)
    return mean, total


def enumerate_social(model, xs, actions):
    """Posterior mean of the public belief after ``N`` steps, summing over hidden actions ``A^N``."""
    P, B, c = model.P, model.B, model.costs
    A = c.shape[1]
    N = len(actions)
    total = 0.0
    acc = np.zeros(P.shape[0])
    for us in product(range(A), repeat=N):
        pi = model.pi0.copy()
        w = 1.0
        for k, u in enumerate(us):
            x = xs[k + 1]
            # probability the myopic agent picks u in state x
            pu = 0.0
            R = np.zeros(P.shape[0])
            for y in range(B.shape[1]):
                eta, z = _hmm_step(pi, y, P, B)
                if eta is None:
                    eta = pi @ P
                if int(np.argmin(eta @ c)) == u:
                    pu += B[x, y]
                    R += B[:, y]
            w *= pu * model.G_ua[u, actions[k]]
            if w == 0:
                break
            un = R * (pi @ P)
            pi = un / un.sum()
        if w > 0:
            total += w
            acc += w * pi
    return acc / total, total


def gamma_grid_posterior(prior_shape, prior_rate, a_block, mu, grid):
    """Normalised grid posterior of the precision ``s`` under ``a_t ~ N(mu, 1/s)`` and a Gamma prior."""
    a = np.asarray(a_block, dtype=float)
    s = np.asarray(grid, dtype=float)
    logp = stats.gamma.logpdf(s, a=prior_shape, scale=1.0 / prior_rate)
    logp = logp + np.sum(stats.norm.logpdf(a[None, :], loc=mu, scale=1.0 / np.sqrt(s[:, None])), axis=1)
    p = np.exp(logp - logp.max())
    return p / integrate.trapezoid(p, s)


def total_variation(p, q, grid):
    return 0.5 * integrate.trapezoid(np.abs(np.asarray(p) - np.asarray(q)), grid)
