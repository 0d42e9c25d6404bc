"""Two-time-scale inverse localization and the sequential localization game.

Slow scale: the adversary's log-belief differences ``Delta`` evolve linearly
in its exponential power measurements. Fast scale: we observe the power it
radiates towards each location with noise variance ``1/|Delta|``, which gives
a Gamma posterior for the precision.

The game: we and the adversary both estimate a fixed scalar ``x0`` and take
turns measuring it directly and eavesdropping on each other's estimates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats

from .errors import ConfigError, ValidationError
from .model import make_rng


# ---------------------------------------------------------------------------
# slow scale: Delta dynamics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PowerModel:
    lam: np.ndarray  # receiver power gains, lam[0] is the reference location
    mu: np.ndarray  # path losses
    T: int
    delta0: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        if np.any(lam <= 0):
            raise ValidationError("power gains must be positive")
        if np.any(lam[1:] == lam[0]):
            raise ValidationError("every gain must differ from the reference gain lam[0]")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float))
        object.__setattr__(self, "delta0", np.asarray(self.delta0, dtype=float))


def delta_dynamics_step(delta, y, lam):
    lam = np.asarray(lam, dtype=float)
    out = np.asarray(delta, dtype=float) + np.log(lam / lam[0]) - (lam - lam[0]) * y
    out[0] = 0.0
    return out


def delta_closed_form(k, S_k, lam, delta0):
    """``Delta_k`` after ``k`` observations summing to ``S_k``."""
    lam = np.asarray(lam, dtype=float)
    out = k * np.log(lam / lam[0]) + np.asarray(delta0, dtype=float) - (lam - lam[0]) * S_k
    out[0] = 0.0
    return out


def power_observation(delta_k, mu, rng, T=1):
    """``(T, X-1)`` power measurements ``mu_i + v / sqrt(|Delta_k(i)|)`` for ``i >= 2``."""
    d = np.abs(np.asarray(delta_k, dtype=float)[1:])
    if np.any(d == 0):
        raise ValidationError("Delta_k(i) = 0 makes the measurement variance infinite")
    mu = np.asarray(mu, dtype=float)
    mu = mu[1:] if mu.size == d.size + 1 else mu
    return mu + rng.standard_normal((int(T), d.size)) / np.sqrt(d)


# ---------------------------------------------------------------------------
# fast scale: Gamma posterior
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GammaDist:
    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ValidationError(f"Gamma parameters must be positive, got ({self.shape}, {self.rate})")

    def pdf(self, s):
        return stats.gamma.pdf(s, a=self.shape, scale=1.0 / self.rate)

    def logpdf(self, s):
        return stats.gamma.logpdf(s, a=self.shape, scale=1.0 / self.rate)

    @property
    def mean(self):
        return self.shape / self.rate


GAMMA_MODES = ("block-sum", "conjugate")


def gamma_posterior(prior: GammaDist, a_block, mu_i, mode="block-sum"):
    """Posterior after a block of ``T`` fast-scale measurements at one location.

    ``mode="block-sum"`` uses the residual of the block sum, ``(sum a - mu)^2``;
    ``mode="conjugate"`` uses the sum of squared residuals, which is the exact
    Normal-precision conjugate update.
    """
    a = np.asarray(a_block, dtype=float).ravel()
    if mode == "block-sum":
        resid2 = (a.sum() - mu_i) ** 2 if a.size else 0.0
    elif mode == "conjugate":
        resid2 = np.sum((a - mu_i) ** 2)
    else:
        raise ConfigError(f"unknown gamma posterior mode {mode!r}; choose from {GAMMA_MODES}")
    rate = prior.rate + 0.5 * resid2
    if not rate > 0:
        raise ValidationError("posterior rate is not positive")
    return GammaDist(prior.shape + 0.5 * a.size, rate)


def precision_posterior_grid(prior: GammaDist, a_block, mu_i, grid):
    """Bayes posterior density of the precision on ``grid`` by direct integration.

    Gaussian likelihood ``a_t ~ N(mu_i, 1/s)`` times the Gamma prior,
    normalised with the trapezoid rule.
    """
    s = np.asarray(grid, dtype=float)
    a = np.asarray(a_block, dtype=float).ravel()
    logp = prior.logpdf(s) + 0.5 * a.size * np.log(s) - 0.5 * s * np.sum((a - mu_i) ** 2)
    p = np.exp(logp - logp.max())
    return p / integrate.trapezoid(p, s)


def grid_total_variation(p, q, grid):
    return 0.5 * float(integrate.trapezoid(np.abs(np.asarray(p) - np.asarray(q)), grid))


def log_delta_density(s, posterior: GammaDist, k, lam, i, delta0):
    """Density of ``log Delta_k(i)`` at ``s`` via the linear change of variables from ``S_k``.

    ``b_i = k log(lam_i/lam_1) + log Delta_0(i)``; the Jacobian uses
    ``|lam_i - lam_1|`` so the density integrates to one for either sign.
    """
    lam = np.asarray(lam, dtype=float)
    dl = lam[i] - lam[0]
    b = k * np.log(lam[i] / lam[0]) + np.log(np.asarray(delta0, dtype=float)[i])
    return posterior.pdf((b - np.asarray(s, dtype=float)) / dl) / abs(dl)


# ---------------------------------------------------------------------------
# sequential game
# ---------------------------------------------------------------------------


def game_precision_step(prec_k, sigma_eps2):
    """Our precision two steps later: one direct unit measurement plus one eavesdropped action."""
    p2 = prec_k + 2.0
    return prec_k + 1.0 + 1.0 / (1.0 + sigma_eps2 * p2**2 * (1.0 + (1.0 - 1.0 / p2) ** 2))


def game_precision_track(horizon, sigma_eps2):
    """``(k, Sigma_k)`` at even ``k = 2, 4, .., horizon`` from a non-informative start."""
    if horizon % 2:
        raise ConfigError("game horizon must be even")
    ks = np.arange(2, horizon + 1, 2)
    prec = np.empty(ks.size)
    p = 0.0
    for j in range(ks.size):
        p = game_precision_step(p, sigma_eps2)
        prec[j] = p
    return ks, 1.0 / prec


@dataclass
class GameTrajectory:
    k: np.ndarray  # (N,) 1..N
    xhat: np.ndarray  # (R, N) our estimate after step k
    Sigma: np.ndarray  # (N,) our covariance after step k (deterministic)
    xhat_adv: np.ndarray  # (R, N//2) adversary estimate at its turns
    Sigma_adv: np.ndarray  # (N//2,)
    x0: np.ndarray  # (R,)


def _game_core(noise, sigma_eps2, x0):
    """Vectorised game over replicates. ``noise`` is ``(R, N/2, 4)`` standard normals.

    Per round: our direct measurement ``y = x0 + v``; the adversary sees our
    action ``a = xhat + eps``, takes it as a prior with our precision, fuses
    its own ``x0 + v'``, and we see its action ``xhat_adv + eps'``. We invert
    that into an effective measurement of ``x0`` and fuse it.
    """
    R, J, _ = noise.shape
    s = np.sqrt(sigma_eps2)
    xhat = np.zeros(R)
    prec = 0.0
    xs = np.empty((R, 2 * J))
    sig = np.empty(2 * J)
    xa = np.empty((R, J))
    sa = np.empty(J)
    for j in range(J):
        v, eps, v_adv, eps_adv = noise[:, j, 0], noise[:, j, 1], noise[:, j, 2], noise[:, j, 3]
        prec += 1.0
        xhat = xhat + (x0 + v - xhat) / prec
        xs[:, 2 * j], sig[2 * j] = xhat, 1.0 / prec
        u = xhat
        a = u + s * eps
        psi = 1.0 / (1.0 + prec)
        adv = (1.0 - psi) * a + psi * (x0 + v_adv)
        xa[:, j], sa[j] = adv, psi
        a_adv = adv + s * eps_adv
        z = a_adv / psi - (1.0 - psi) / psi * u
        Rbar = 1.0 + sigma_eps2 * ((1.0 - psi) ** 2 + 1.0) / psi**2
        new = prec + 1.0 / Rbar
        xhat = (prec * xhat + z / Rbar) / new
        prec = new
        xs[:, 2 * j + 1], sig[2 * j + 1] = xhat, 1.0 / prec
    return xs, sig, xa, sa


def simulate_game(sigma_eps2, horizon, seeds, x0=None):
    """Play the game once per seed; ``x0`` defaults to a standard normal draw per seed."""
    if horizon % 2:
        raise ConfigError("game horizon must be even")
    seeds = np.atleast_1d(seeds)
    J = horizon // 2
    noise = np.empty((seeds.size, J, 4))
    x0s = np.empty(seeds.size)
    for r, sd in enumerate(seeds):
        rng = make_rng(int(sd), 0)
        x0s[r] = rng.standard_normal() if x0 is None else x0
        noise[r] = rng.standard_normal((J, 4))
    xs, sig, xa, sa = _game_core(noise, float(sigma_eps2), x0s)
    return GameTrajectory(np.arange(1, horizon + 1), xs, sig, xa, sa, x0s)


def game_mse(sigma_eps2, horizon, seeds):
    """Empirical mean squared error of our final estimate across seeds."""
    tr = simulate_game(sigma_eps2, horizon, seeds)
    return float(np.mean((tr.xhat[:, -1] - tr.x0) ** 2))
