"""Sequential importance sampling/resampling approximation of the inverse HMM filter.

Each particle carries an adversary belief and the observation that produced
it. Beliefs are always recomputed with the HMM filter, so the deterministic
belief constraint holds by construction and no Dirac density is ever
evaluated.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import filters
from .errors import ConfigError, DegeneracyError
from .model import _draw_rows, make_rng

DEFAULT_ESS_THRESHOLD = 0.5


@dataclass(frozen=True)
class ParticleCloud:
    pi: np.ndarray  # (N, X)
    y: np.ndarray  # (N,) observation that produced each belief; -1 at k=0
    ancestry: np.ndarray  # (N,) index of the root trajectory each particle descends from
    weights: np.ndarray  # (N,) normalised
    k: int = 0
    log_evidence: float = 0.0

    @classmethod
    def initial(cls, pi0, n):
        n = int(n)
        if n < 1:
            raise ConfigError("need at least one particle")
        pi = np.tile(np.asarray(pi0, dtype=float), (n, 1))
        return cls(pi, np.full(n, -1), np.arange(n), np.full(n, 1.0 / n))

    @property
    def size(self):
        return self.weights.size

    @property
    def ess(self):
        return 1.0 / np.sum(self.weights**2)

    def mean(self):
        return self.weights @ self.pi


def _reweight(cloud, pi, y, incr):
    un = cloud.weights * incr
    z = un.sum()
    if not (np.isfinite(z) and z > filters.LIKELIHOOD_FLOOR):
        raise DegeneracyError(cloud.k + 1, float(np.max(un)) if un.size else 0.0, cloud.ess)
    return ParticleCloud(pi, y, cloud.ancestry, un / z, cloud.k + 1, cloud.log_evidence + float(np.log(z)))


def _propagate(cloud, y, P, B):
    pi, _ = filters.hmm_filter_many(cloud.pi, y, P, B)
    ok = ~np.isnan(pi[:, 0])
    return np.where(ok[:, None], pi, 0.0), ok


def sis_step_optimal(cloud: ParticleCloud, x_k, x_prev, a_k, P, B, G, rng):
    """Draw ``y ~ B[x_k, .]``, filter, and weight by ``G[pi, a_k] P[x_prev, x_k]``."""
    y = _draw_rows(np.cumsum(B, axis=1), np.full(cloud.size, int(x_k)), rng.random(cloud.size))
    pi, ok = _propagate(cloud, y, P, B)
    incr = np.where(ok, G.likelihood(pi)[:, int(a_k)], 0.0) * P[int(x_prev), int(x_k)]
    return _reweight(cloud, pi, y, incr)


class OptimalProposal:
    """``q(y | x_k) = B[x_k, y]``; reproduces :func:`sis_step_optimal` draw for draw."""

    def __init__(self, B):
        self.B = np.asarray(B, dtype=float)
        self._cdf = np.cumsum(self.B, axis=1)

    def sample(self, cloud, x_k, rng):
        return _draw_rows(self._cdf, np.full(cloud.size, int(x_k)), rng.random(cloud.size))

    def pdf(self, cloud, y, x_k):
        return self.B[int(x_k), y]


class UniformProposal:
    def __init__(self, num_obs):
        self.Y = int(num_obs)
        self._cdf = np.cumsum(np.full((1, self.Y), 1.0 / self.Y), axis=1)

    def sample(self, cloud, x_k, rng):
        return _draw_rows(self._cdf, np.zeros(cloud.size, dtype=int), rng.random(cloud.size))

    def pdf(self, cloud, y, x_k):
        return np.full(np.shape(y), 1.0 / self.Y)


def sis_step_generic(cloud: ParticleCloud, x_k, x_prev, a_k, P, B, G, proposal, rng):
    """Importance step with an arbitrary observation proposal.

    The increment is ``G[pi, a] B[x_k, y] P[x_prev, x_k] / q(y)``.
    """
    y = np.asarray(proposal.sample(cloud, x_k, rng))
    q = np.asarray(proposal.pdf(cloud, y, x_k), dtype=float)
    pi, ok = _propagate(cloud, y, P, B)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(q > 0, B[int(x_k), y] / q, 0.0)
    incr = np.where(ok, G.likelihood(pi)[:, int(a_k)], 0.0) * ratio * P[int(x_prev), int(x_k)]
    return _reweight(cloud, pi, y, incr)


def systematic_resample(weights, rng):
    n = weights.size
    u = (rng.random() + np.arange(n)) / n
    c = np.cumsum(weights)
    c[-1] = 1.0
    return np.searchsorted(c, u, side="right")


def multinomial_resample(weights, rng):
    c = np.cumsum(weights)
    c[-1] = 1.0
    return np.searchsorted(c, rng.random(weights.size), side="right")


RESAMPLERS = {"systematic": systematic_resample, "multinomial": multinomial_resample}


def resample(cloud: ParticleCloud, scheme="systematic", threshold_ess=DEFAULT_ESS_THRESHOLD, rng=None):
    """Resample when ``ESS < threshold_ess * N``; otherwise return the cloud untouched."""
    if scheme not in RESAMPLERS:
        raise ConfigError(f"unknown resampler {scheme!r}; choose from {sorted(RESAMPLERS)}")
    if cloud.ess >= threshold_ess * cloud.size:
        return cloud
    idx = RESAMPLERS[scheme](cloud.weights, rng)
    return replace(
        cloud,
        pi=cloud.pi[idx],
        y=cloud.y[idx],
        ancestry=cloud.ancestry[idx],
        weights=np.full(cloud.size, 1.0 / cloud.size),
    )


@dataclass
class ParticleRun:
    means: np.ndarray  # (K+1, X)
    ess: np.ndarray  # (K,) ESS after weighting, before resampling
    log_evidence: float
    cloud: ParticleCloud


def run_particle_filter(model, xs, actions, num_particles, seed, ess_threshold=DEFAULT_ESS_THRESHOLD,
                        resampler="systematic", proposal=None):
    """Particle inverse filter over a record; ``proposal=None`` uses the optimal density."""
    rng = make_rng(seed, 1)
    cloud = ParticleCloud.initial(model.pi0, num_particles)
    means = [cloud.mean()]
    ess = []
    for k, a in enumerate(actions):
        if proposal is None:
            cloud = sis_step_optimal(cloud, xs[k + 1], xs[k], a, model.P, model.B, model.channel, rng)
        else:
            cloud = sis_step_generic(cloud, xs[k + 1], xs[k], a, model.P, model.B, model.channel, proposal, rng)
        means.append(cloud.mean())
        ess.append(cloud.ess)
        cloud = resample(cloud, resampler, ess_threshold, rng)
    return ParticleRun(np.array(means), np.array(ess), cloud.log_evidence, cloud)
