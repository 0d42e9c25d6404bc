"""Shared domain types and the generative simulator.

The chain simulated here is: our state ``x`` evolves under ``P`` (or a linear
Gaussian law), the adversary observes ``y``, filters it to a belief ``pi``,
acts ``u`` as a function of that belief and we record ``a``, a noisy version
of ``u``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import filters
from .errors import ConfigError, ValidationError

SIMPLEX_TOL = 1e-9
PSD_TOL = 1e-10


def make_rng(seed, *stream):
    """Counter-based generator for ``seed`` and an optional stream path.

    ``make_rng(7, 3)`` and ``make_rng(7, 4)`` are independent streams of the
    same experiment; neither depends on how many numbers another consumed.
    """
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------------------
# validation helpers
# ---------------------------------------------------------------------------


def as_probability_vector(v, name="probability vector"):
    p = np.array(v, dtype=float)
    if p.ndim != 1 or p.size < 1:
        raise ValidationError(f"{name} must be a non-empty 1-d array")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ValidationError(f"{name} has negative or non-finite entries: {p}")
    if abs(p.sum() - 1.0) > SIMPLEX_TOL:
        raise ValidationError(f"{name} sums to {p.sum()!r}, not 1")
    return p / p.sum()


def as_stochastic_matrix(m, name="stochastic matrix", square=True):
    a = np.array(m, dtype=float)
    if a.ndim != 2:
        raise ValidationError(f"{name} must be 2-d")
    if square and a.shape[0] != a.shape[1]:
        raise ValidationError(f"{name} must be square, got {a.shape}")
    if not np.all(np.isfinite(a)) or np.any(a < 0):
        raise ValidationError(f"{name} has negative or non-finite entries")
    sums = a.sum(axis=1)
    if np.max(np.abs(sums - 1.0)) > SIMPLEX_TOL:
        raise ValidationError(f"rows of {name} do not sum to 1: {sums}")
    return a / sums[:, None]


def as_psd(m, name="covariance"):
    a = np.atleast_2d(np.array(m, dtype=float))
    if a.shape[0] != a.shape[1]:
        raise ValidationError(f"{name} must be square")
    a = 0.5 * (a + a.T)
    w, v = np.linalg.eigh(a)
    if w.min() < -PSD_TOL * max(1.0, abs(w).max()):
        raise ValidationError(f"{name} is not PSD (min eigenvalue {w.min():.3g})")
    if w.min() < 0:
        a = (v * np.clip(w, 0.0, None)) @ v.T
    return a


def stationary_distribution(P):
    """Left Perron vector of a stochastic matrix (solves ``pi P = pi``)."""
    P = as_stochastic_matrix(P)
    n = P.shape[0]
    lhs = np.vstack([P.T - np.eye(n), np.ones(n)])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    return np.clip(pi, 0.0, None) / np.clip(pi, 0.0, None).sum()


# ---------------------------------------------------------------------------
# beliefs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.array(self.mean, dtype=float))
        cov = as_psd(self.cov)
        if cov.shape != (mean.size, mean.size):
            raise ValidationError("mean and covariance dimensions disagree")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)


@dataclass(frozen=True)
class InformationBelief:
    """Gaussian belief in information form: ``precision @ mean = info``.

    Zero precision encodes the non-informative (infinite covariance) prior.
    """

    info: np.ndarray
    precision: np.ndarray

    def __post_init__(self):
        info = np.atleast_1d(np.array(self.info, dtype=float))
        prec = as_psd(self.precision, "precision")
        if prec.shape != (info.size, info.size):
            raise ValidationError("info vector and precision dimensions disagree")
        object.__setattr__(self, "info", info)
        object.__setattr__(self, "precision", prec)

    @classmethod
    def noninformative(cls, dim):
        return cls(np.zeros(dim), np.zeros((dim, dim)))

    @classmethod
    def from_gaussian(cls, belief):
        prec = np.linalg.inv(belief.cov)
        return cls(prec @ belief.mean, prec)

    def to_gaussian(self):
        cov = np.linalg.inv(self.precision)
        return GaussianBelief(cov @ self.info, cov)


# ---------------------------------------------------------------------------
# adversary policies and action channels
# ---------------------------------------------------------------------------


class AdversaryPolicy:
    """Scalar action ``u = phi(g' pi)``.

    ``g`` must be strictly increasing and ``phi`` non-negative and
    non-decreasing; flat segments (quantizers) are allowed.
    """

    def __init__(self, g, phi: Callable[[np.ndarray], np.ndarray], thresholds=None):
        g = np.asarray(g, dtype=float)
        if g.ndim != 1 or g.size < 2 or np.any(np.diff(g) <= 0):
            raise ValidationError(f"g must be strictly increasing, got {g}")
        self.g = g
        self.phi = phi
        self.thresholds = None if thresholds is None else np.asarray(thresholds, dtype=float)
        s = np.linspace(g.min(), g.max(), 1001)
        vals = np.asarray(phi(s), dtype=float)
        if np.any(vals < 0) or np.any(np.diff(vals) < -1e-12):
            raise ValidationError("phi must be non-negative and non-decreasing on [min g, max g]")

    @classmethod
    def quantizer(cls, g, thresholds, levels):
        thresholds = np.asarray(thresholds, dtype=float)
        levels = np.asarray(levels, dtype=float)
        if levels.size != thresholds.size + 1:
            raise ValidationError("a quantizer needs len(thresholds) + 1 levels")
        if np.any(np.diff(thresholds) <= 0):
            raise ValidationError("quantizer thresholds must be strictly increasing")

        def phi(s):
            return levels[np.searchsorted(thresholds, s, side="right")]

        return cls(g, phi, thresholds=thresholds)

    @classmethod
    def constant(cls, g, value):
        return cls(g, lambda s: np.full(np.shape(s), float(value)))

    def score(self, pis):
        return np.asarray(pis, dtype=float) @ self.g

    def __call__(self, pis):
        return np.asarray(self.phi(self.score(pis)), dtype=float)


class QuantizedPolicyChannel:
    """Finite action likelihood ``G[pi, a] = confusion[u(pi), a]``.

    ``u(pi)`` counts how many thresholds ``g' pi`` has reached, so the simplex
    is partitioned into ``len(thresholds) + 1`` regions of constant action.
    """

    def __init__(self, g, thresholds, confusion):
        g = np.asarray(g, dtype=float)
        if np.any(np.diff(g) <= 0):
            raise ValidationError("g must be strictly increasing")
        self.g = g
        self.thresholds = np.atleast_1d(np.asarray(thresholds, dtype=float))
        self.confusion = as_stochastic_matrix(confusion, "confusion matrix", square=False)
        if self.confusion.shape[0] != self.thresholds.size + 1:
            raise ValidationError("confusion matrix needs one row per quantizer level")

    @property
    def num_actions(self):
        return self.confusion.shape[1]

    def action_index(self, pis):
        return np.searchsorted(self.thresholds, np.asarray(pis) @ self.g, side="right")

    def likelihood(self, pis):
        return self.confusion[self.action_index(pis)]


class SoftmaxChannel:
    """Smooth action likelihood ``G[pi, :] = softmax(W pi)``; used for random instances."""

    def __init__(self, W):
        self.W = np.asarray(W, dtype=float)

    @property
    def num_actions(self):
        return self.W.shape[0]

    def action_index(self, pis):
        return np.argmax(np.asarray(pis) @ self.W.T, axis=-1)

    def likelihood(self, pis):
        z = np.asarray(pis) @ self.W.T
        z = z - z.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)


class UniformChannel:
    def __init__(self, num_actions):
        self._a = int(num_actions)

    @property
    def num_actions(self):
        return self._a

    def action_index(self, pis):
        return np.zeros(np.shape(pis)[:-1], dtype=int)

    def likelihood(self, pis):
        shape = np.shape(pis)[:-1] + (self._a,)
        return np.full(shape, 1.0 / self._a)


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------


@dataclass
class HMMModel:
    """Finite-state chain observed by an HMM-filtering adversary."""

    P: np.ndarray
    B: np.ndarray
    pi0: np.ndarray
    channel: object
    x0_dist: Optional[np.ndarray] = None

    def __post_init__(self):
        self.P = as_stochastic_matrix(self.P, "P")
        self.B = as_stochastic_matrix(self.B, "B", square=False)
        self.pi0 = as_probability_vector(self.pi0, "pi0")
        X = self.P.shape[0]
        if self.B.shape[0] != X or self.pi0.size != X:
            raise ConfigError(f"dimension mismatch: P is {X}x{X}, B is {self.B.shape}, pi0 has {self.pi0.size}")
        self.x0_dist = self.pi0 if self.x0_dist is None else as_probability_vector(self.x0_dist, "x0_dist")
        if self.x0_dist.size != X:
            raise ConfigError("x0_dist dimension mismatch")
        g = getattr(self.channel, "g", None)
        if g is not None and np.size(g) != X:
            raise ConfigError("action channel g has the wrong dimension")

    @property
    def num_states(self):
        return self.P.shape[0]

    @property
    def num_obs(self):
        return self.B.shape[1]


PHI_MAPS = {
    "identity": lambda S: np.eye(S.shape[0]),
    "inv-one-plus": lambda S: np.linalg.inv(np.eye(S.shape[0]) + S),
}


@dataclass
class LinearGaussianModel:
    """``x' = A x + w``, ``y = C x + v``, ``a = phi(Sigma) xhat + eps``.

    ``Sigma0=None`` is the non-informative adversary prior (zero precision).
    ``x0_cov`` is the spread of the true initial state used by the simulator.
    """

    A: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    sigma_eps2: float = 1.0
    xhat0: Optional[np.ndarray] = None
    Sigma0: Optional[np.ndarray] = None
    x0_cov: Optional[np.ndarray] = None
    phi: str = "identity"

    def __post_init__(self):
        self.A = np.atleast_2d(np.array(self.A, dtype=float))
        X = self.A.shape[0]
        self.C = np.atleast_2d(np.array(self.C, dtype=float))
        self.Q = as_psd(self.Q, "Q")
        self.R = as_psd(self.R, "R")
        if self.A.shape != (X, X) or self.C.shape[1] != X or self.Q.shape != (X, X):
            raise ConfigError("linear-gaussian model dimensions disagree")
        if self.R.shape != (self.C.shape[0],) * 2:
            raise ConfigError("R must match the observation dimension")
        if np.linalg.eigvalsh(self.R).min() <= 0:
            raise ValidationError("R must be positive definite")
        if self.sigma_eps2 < 0:
            raise ValidationError("sigma_eps2 must be non-negative")
        self.xhat0 = np.zeros(X) if self.xhat0 is None else np.atleast_1d(np.array(self.xhat0, dtype=float))
        if self.Sigma0 is not None:
            self.Sigma0 = as_psd(self.Sigma0, "Sigma0")
        if self.x0_cov is None:
            self.x0_cov = self.Sigma0 if self.Sigma0 is not None else np.eye(X)
        self.x0_cov = as_psd(self.x0_cov, "x0_cov")
        if self.phi not in PHI_MAPS:
            raise ConfigError(f"unknown phi map {self.phi!r}; choose from {sorted(PHI_MAPS)}")

    @property
    def dim(self):
        return self.A.shape[0]

    def phi_of(self, Sigma):
        return PHI_MAPS[self.phi](np.atleast_2d(Sigma))

    def with_C(self, C):
        return LinearGaussianModel(
            self.A, np.atleast_2d(np.array(C, dtype=float)), self.Q, self.R, self.sigma_eps2,
            self.xhat0, self.Sigma0, self.x0_cov, self.phi,
        )


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------


@dataclass
class TrajectoryRecord:
    """Simulated ``(x, y, pi, u, a)`` record.

    Index 0 of ``x`` and ``pi`` is the initial condition; ``y``, ``u`` and
    ``a`` start at time 1. For the linear-Gaussian chain ``pi`` holds the
    adversary's conditional means and ``cov`` its covariances.
    """

    x: np.ndarray
    y: np.ndarray
    pi: np.ndarray
    u: np.ndarray
    a: np.ndarray
    seed: int
    cov: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        n = len(self.y)
        if not (len(self.x) == len(self.pi) == n + 1 and len(self.u) == len(self.a) == n):
            raise ValidationError("trajectory sequences have inconsistent lengths")

    @property
    def horizon(self):
        return len(self.y)

    def to_csv(self, path):
        pis = np.atleast_2d(self.pi.reshape(len(self.pi), -1))
        header = ["k", "x", "y"] + [f"pi_{i}" for i in range(pis.shape[1])] + ["u", "a"]
        xs = self.x.reshape(len(self.x), -1)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k in range(len(self.x)):
                yk = "" if k == 0 else _cell(self.y[k - 1])
                uk = "" if k == 0 else _cell(self.u[k - 1])
                ak = "" if k == 0 else _cell(self.a[k - 1])
                w.writerow([k, _cell(xs[k]), yk, *[repr(float(p)) for p in pis[k]], uk, ak])


def _cell(v):
    v = np.ravel(v)
    if v.size > 1:
        return " ".join(repr(float(t)) for t in v)
    if np.issubdtype(v.dtype, np.integer):
        return str(int(v[0]))
    return repr(float(v[0]))


def _draw_rows(cdf, idx, u):
    """Inverse-CDF draw from rows ``cdf[idx]`` with uniforms ``u``."""
    c = cdf[idx]
    out = (np.asarray(u)[..., None] >= c).sum(axis=-1)
    return np.minimum(out, cdf.shape[-1] - 1)


def simulate_chain(model, horizon, seed):
    """Simulate the full chain for ``horizon`` steps; pure function of its arguments."""
    horizon = int(horizon)
    if horizon < 0:
        raise ConfigError("horizon must be non-negative")
    if isinstance(model, HMMModel):
        return _simulate_hmm(model, horizon, seed)
    if isinstance(model, LinearGaussianModel):
        return _simulate_linear(model, horizon, seed)
    raise ConfigError(f"cannot simulate model of type {type(model).__name__}")


def _simulate_hmm(m, N, seed):
    rng = make_rng(seed, 0)
    Pc = np.cumsum(m.P, axis=1)
    Bc = np.cumsum(m.B, axis=1)
    x = np.empty(N + 1, dtype=int)
    y = np.empty(N, dtype=int)
    u = np.empty(N, dtype=int)
    a = np.empty(N, dtype=int)
    pi = np.empty((N + 1, m.num_states))
    x[0] = _draw_rows(np.cumsum(m.x0_dist)[None, :], 0, rng.random())
    pi[0] = m.pi0
    for k in range(1, N + 1):
        x[k] = _draw_rows(Pc, x[k - 1], rng.random())
        y[k - 1] = _draw_rows(Bc, x[k], rng.random())
        pi[k] = filters.hmm_filter_step(pi[k - 1], y[k - 1], m.P, m.B)
        u[k - 1] = m.channel.action_index(pi[k])
        g = m.channel.likelihood(pi[k])
        a[k - 1] = _draw_rows(np.cumsum(g)[None, :], 0, rng.random())
    return TrajectoryRecord(x, y, pi, u, a, int(seed))


def _psd_sqrt(S):
    w, v = np.linalg.eigh(S)
    return v * np.sqrt(np.clip(w, 0.0, None))


def _simulate_linear(m, N, seed):
    rng = make_rng(seed, 0)
    X, Y = m.dim, m.C.shape[0]
    Lq, Lr, L0 = _psd_sqrt(m.Q), _psd_sqrt(m.R), _psd_sqrt(m.x0_cov)
    x = np.empty((N + 1, X))
    y = np.empty((N, Y))
    xh = np.empty((N + 1, X))
    cov = np.empty((N + 1, X, X))
    u = np.empty((N, X))
    a = np.empty((N, X))
    x[0] = m.xhat0 + L0 @ rng.standard_normal(X)
    xh[0] = m.xhat0
    if m.Sigma0 is None:
        belief = InformationBelief.noninformative(X)
        cov[0] = np.inf
    else:
        belief = GaussianBelief(m.xhat0, m.Sigma0)
        cov[0] = belief.cov
    s = np.sqrt(m.sigma_eps2)
    for k in range(1, N + 1):
        x[k] = m.A @ x[k - 1] + Lq @ rng.standard_normal(X)
        y[k - 1] = m.C @ x[k] + Lr @ rng.standard_normal(Y)
        if isinstance(belief, InformationBelief):
            belief = filters.information_filter_step(belief, y[k - 1], m.A, m.C, m.Q, m.R)
            if np.linalg.matrix_rank(belief.precision) < X:
                raise ConfigError("non-informative prior not resolved after one step; C'R^-1 C must be invertible")
            belief = belief.to_gaussian()
        else:
            belief = filters.kalman_step(belief, y[k - 1], m.A, m.C, m.Q, m.R)
        xh[k], cov[k] = belief.mean, belief.cov
        u[k - 1] = m.phi_of(belief.cov) @ belief.mean
        a[k - 1] = u[k - 1] + s * rng.standard_normal(X)
    scalar = X == 1
    return TrajectoryRecord(
        x[:, 0] if scalar else x,
        y[:, 0] if Y == 1 else y,
        xh,
        u[:, 0] if scalar else u,
        a[:, 0] if scalar else a,
        int(seed),
        cov=cov,
    )
