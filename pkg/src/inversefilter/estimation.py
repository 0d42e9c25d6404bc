"""Maximum-likelihood calibration of the adversary's sensor and Cramér-Rao bounds.

Two data settings are compared throughout:

* classic: we see the adversary's own observations ``y`` and fit ``C`` with
  an ordinary Kalman likelihood;
* inverse: we see only our states ``x`` and its noisy actions ``a`` and fit
  ``C`` through the inverse Kalman (or inverse HMM) likelihood.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize

from . import kernels
from .errors import ImpossibleActionError, OptimizationFailure, SingularMatrixError, UnreliableEstimateError
from .inverse_hmm import BeliefTree, DEFAULT_DEPTH_CAP, expand_level, inverse_hmm_step
from .inverse_kalman import run_inverse_kalman
from .model import LinearGaussianModel, make_rng

LOG2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# inverse HMM likelihood
# ---------------------------------------------------------------------------


def loglik_inverse_hmm(model, xs, actions, route="normalizers", depth_cap=DEFAULT_DEPTH_CAP, return_flag=False):
    """``log p(x_{1:N}, a_{1:N} | x_0)`` under ``model`` from the exact belief tree.

    ``route="normalizers"`` sums the log of each step's normaliser;
    ``route="mass"`` propagates the un-normalised weights and takes the log of
    the final total mass. Both include the ``log P[x_{k-1}, x_k]`` terms. A
    zero likelihood gives ``-inf`` (and ``ok=False`` with ``return_flag``).
    """
    xs = np.asarray(xs, dtype=int)
    trans = float(np.sum(np.log(model.P[xs[:-1], xs[1:]]))) if len(xs) > 1 else 0.0
    ok = True
    if route == "normalizers":
        tree = BeliefTree.root(model.pi0, model.num_obs, depth_cap)
        total = 0.0
        try:
            for k, a in enumerate(actions):
                tree = inverse_hmm_step(tree, xs[k + 1], a, model.P, model.B, model.channel)
                total += tree.leaves.log_norm
        except ImpossibleActionError:
            total, ok = -np.inf, False
    elif route == "mass":
        tree = BeliefTree.root(model.pi0, model.num_obs, depth_cap)
        mass = tree.leaves.weights
        for k, a in enumerate(actions):
            tree = expand_level(tree, model.P, model.B)
            lev = tree.leaves
            pis = np.where(lev.alive[:, None], lev.pi, 0.0)
            up = np.zeros(lev.size)
            np.add.at(up, lev.edge_child, model.B[xs[k + 1], lev.edge_label] * mass[lev.edge_parent])
            mass = np.where(lev.alive, up * model.channel.likelihood(pis)[:, int(a)], 0.0)
        z = mass.sum()
        total = float(np.log(z)) if z > 0 else -np.inf
        ok = z > 0
    else:
        raise ValueError(f"unknown route {route!r}")
    value = total + trans if ok else -np.inf
    return (value, ok) if return_flag else value


# ---------------------------------------------------------------------------
# linear-Gaussian likelihoods
# ---------------------------------------------------------------------------


def loglik_inverse_kalman(C, record, model: LinearGaussianModel):
    """Innovations log-likelihood of the actions for gain ``C`` (any dimension).

    Our prior on the adversary's initial estimate is exact.
    """
    run = run_inverse_kalman(model.with_C(C), record)
    ll = 0.0
    for e, S in zip(run.innovations, run.innovation_cov):
        sign, logdet = np.linalg.slogdet(S)
        if sign <= 0:
            raise SingularMatrixError("inverse innovation covariance is not positive definite")
        ll -= 0.5 * (e.size * LOG2PI + logdet + e @ np.linalg.solve(S, e))
    return float(ll)


def loglik_classic(C, y, model: LinearGaussianModel):
    """Kalman innovations log-likelihood of the adversary's own observations (scalar model)."""
    S0 = _scalar_prior(model)
    return float(kernels.classic_loglik_grid(np.atleast_2d(y), [C], model.A[0, 0], model.Q[0, 0],
                                             model.R[0, 0], S0)[0, 0])


def _scalar_prior(model):
    if model.Sigma0 is None:
        raise ValueError("the scalar likelihood kernels need a finite adversary prior")
    return float(np.asarray(model.Sigma0).ravel()[0])


@dataclass(frozen=True)
class ScalarSetup:
    """Scalar linear-Gaussian experiment; the adversary starts from the stationary law."""

    A: float = 0.4
    Q: float = 2.0
    R: float = 1.0
    sigma_eps2: float = 1.0
    horizon: int = 1000
    phi: str = "identity"

    @property
    def S0(self):
        return self.Q / (1.0 - self.A**2)

    def model(self, C):
        return LinearGaussianModel(self.A, C, self.Q, self.R, self.sigma_eps2, Sigma0=self.S0,
                                   x0_cov=self.S0, phi=self.phi)


def simulate_scalar_batch(setup: ScalarSetup, C, seeds):
    """Vectorised scalar chain; replicate ``r`` equals ``simulate_chain(setup.model(C), N, seeds[r])``.

    Returns ``(x, y, a)`` with shapes ``(M, N+1)``, ``(M, N)``, ``(M, N)``.
    """
    seeds = np.atleast_1d(seeds)
    M, N = seeds.size, int(setup.horizon)
    noise = np.empty((M, 1 + 3 * N))
    for r, sd in enumerate(seeds):
        noise[r] = make_rng(int(sd), 0).standard_normal(1 + 3 * N)
    w = noise[:, 1:].reshape(M, N, 3)
    A, Q, R, S0 = setup.A, setup.Q, setup.R, setup.S0
    x = np.empty((M, N + 1))
    y = np.empty((M, N))
    a = np.empty((M, N))
    x[:, 0] = math.sqrt(S0) * noise[:, 0]
    mean = np.zeros(M)
    P = S0
    se = math.sqrt(setup.sigma_eps2)
    for k in range(N):
        x[:, k + 1] = A * x[:, k] + math.sqrt(Q) * w[:, k, 0]
        y[:, k] = C * x[:, k + 1] + math.sqrt(R) * w[:, k, 1]
        mp = A * mean
        Pp = A * A * P + Q
        S = C * C * Pp + R
        gain = Pp * C / S
        mean = mp + gain * (y[:, k] - C * mp)
        P = Pp * (1.0 - gain * C)
        phi = 1.0 if setup.phi == "identity" else 1.0 / (1.0 + P)
        a[:, k] = phi * mean + se * w[:, k, 2]
    return x, y, a


def classic_grid(setup: ScalarSetup, y, cs):
    return kernels.classic_loglik_grid(y, cs, setup.A, setup.Q, setup.R, setup.S0)


def inverse_grid(setup: ScalarSetup, x, a, cs):
    return kernels.inverse_loglik_grid(x, a, cs, setup.A, setup.Q, setup.R, setup.sigma_eps2, setup.S0,
                                       setup.phi)


# ---------------------------------------------------------------------------
# likelihood curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LikelihoodCurve:
    grid: np.ndarray
    logL: np.ndarray
    argmax: float
    curvature_at_max: float

    @classmethod
    def from_values(cls, grid, logL, half_width=None):
        grid = np.asarray(grid, dtype=float)
        logL = np.asarray(logL, dtype=float)
        if np.any(np.diff(grid) <= 0):
            raise ValueError("likelihood grid must be strictly increasing")
        i = int(np.nanargmax(logL))
        return cls(grid, logL, float(grid[i]), curvature_at(grid, logL, i, half_width))


def curvature_at(grid, logL, i, half_width=None):
    """``-d^2 logL / d theta^2`` at index ``i`` from a local quadratic least-squares fit.

    The window spans about 2% of the grid (at least 3 points each side); it is
    clipped at the grid ends.
    """
    n = grid.size
    h = max(3, n // 100) if half_width is None else int(half_width)
    lo, hi = max(0, i - h), min(n, i + h + 1)
    if hi - lo < 3:
        lo, hi = max(0, hi - 3), max(3, hi)
    coef = np.polyfit(grid[lo:hi] - grid[i], logL[lo:hi], 2)
    return float(-2.0 * coef[0])


@dataclass
class CurveComparison:
    c_true: float
    grid: np.ndarray
    classic: np.ndarray  # (M, G)
    inverse: np.ndarray  # (M, G)
    seeds: np.ndarray

    @property
    def classic_curve(self):
        return LikelihoodCurve.from_values(self.grid, self.classic.mean(axis=0))

    @property
    def inverse_curve(self):
        return LikelihoodCurve.from_values(self.grid, self.inverse.mean(axis=0))

    @property
    def classic_argmax(self):
        return self.grid[np.argmax(self.classic, axis=1)]

    @property
    def inverse_argmax(self):
        return self.grid[np.argmax(self.inverse, axis=1)]

    @property
    def curvature_ratio(self):
        ic = curvature_at(self.grid, self.inverse.mean(axis=0), int(np.argmax(self.inverse.mean(axis=0))))
        cc = curvature_at(self.grid, self.classic.mean(axis=0), int(np.argmax(self.classic.mean(axis=0))))
        return ic / cc


def default_c_grid(n=1000, upper=10.0):
    return np.linspace(upper / n, upper, n)


def likelihood_curves(c_true, seeds, setup: Optional[ScalarSetup] = None, grid=None):
    setup = ScalarSetup() if setup is None else setup
    grid = default_c_grid() if grid is None else np.asarray(grid, dtype=float)
    x, y, a = simulate_scalar_batch(setup, c_true, seeds)
    return CurveComparison(float(c_true), grid, classic_grid(setup, y, grid), inverse_grid(setup, x, a, grid),
                      np.atleast_1d(seeds))


# ---------------------------------------------------------------------------
# optimisation
# ---------------------------------------------------------------------------


@dataclass
class MleResult:
    theta: np.ndarray
    value: float
    starts: list = field(default_factory=list)  # (start, theta, value) per start
    evaluations: int = 0


GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_max(f, lo, hi, tol=1e-9, max_iter=200):
    """Maximise a scalar function on ``[lo, hi]``; non-finite values count as ``-inf``."""

    def F(t):
        v = f(t)
        return v if np.isfinite(v) else -np.inf

    a, b = float(lo), float(hi)
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = F(c), F(d)
    n = 2
    while b - a > tol * max(1.0, abs(a) + abs(b)) and n < max_iter:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = F(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = F(d)
        n += 1
    t = c if fc >= fd else d
    return t, max(fc, fd), n


def mle(objective: Callable, bounds, theta0=None, starts=5, seed=0):
    """Maximise ``objective`` over a box by derivative-free multi-start search.

    Scalar ``theta``: golden-section on ``starts`` equal sub-intervals of the
    bounds. Vector ``theta``: bounded Nelder-Mead from ``theta0`` plus
    ``starts - 1`` uniform random starts. The best start wins.
    """
    bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
    runs = []
    evals = 0
    if bounds.shape[0] == 1:
        lo, hi = bounds[0]
        edges = np.linspace(lo, hi, int(starts) + 1)
        for a, b in zip(edges[:-1], edges[1:]):
            t, v, n = golden_section_max(objective, a, b)
            evals += n
            runs.append((0.5 * (a + b), np.array([t]), v))
    else:
        rng = make_rng(seed, 7)
        x0s = [np.clip(np.asarray(theta0, dtype=float), bounds[:, 0], bounds[:, 1])] if theta0 is not None else []
        while len(x0s) < starts:
            x0s.append(rng.uniform(bounds[:, 0], bounds[:, 1]))

        def neg(t):
            v = objective(t)
            return -v if np.isfinite(v) else np.inf

        for x0 in x0s:
            res = optimize.minimize(neg, x0, method="Nelder-Mead", bounds=bounds,
                                    options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 4000})
            evals += res.nfev
            runs.append((x0, np.asarray(res.x), -res.fun))
    finite = [r for r in runs if np.isfinite(r[2])]
    if not finite:
        raise OptimizationFailure("objective was non-finite at every probe point")
    best = max(finite, key=lambda r: r[2])
    return MleResult(best[1], float(best[2]), runs, evals)


# ---------------------------------------------------------------------------
# Cramér-Rao bounds
# ---------------------------------------------------------------------------


def fd_step(theta):
    return 1e-4 * max(1.0, abs(float(theta)))


@dataclass(frozen=True)
class CrbEstimate:
    crb: float
    se: float
    fisher: float
    scores: np.ndarray


def crb_from_scores(scores):
    """``1 / mean(score^2)`` with a leave-one-out jackknife standard error."""
    s2 = np.asarray(scores, dtype=float) ** 2
    n = s2.size
    info = s2.mean()
    if not info > 0:
        raise UnreliableEstimateError(f"Fisher information estimate {info:.3g} is not positive")
    loo = (n * info - s2) / (n - 1)
    if np.any(loo <= 0):
        raise UnreliableEstimateError("a leave-one-out Fisher information is not positive")
    c = 1.0 / loo
    se = math.sqrt((n - 1) / n * np.sum((c - c.mean()) ** 2))
    return CrbEstimate(1.0 / info, se, info, np.asarray(scores))


def crb(theta, simulate: Callable, loglik: Callable, replicates, seed=0):
    """Monte Carlo CRB for scalar ``theta`` with any model.

    ``simulate(theta, rng)`` draws one data set, ``loglik(theta, data)``
    evaluates its log-likelihood. The score is a central finite difference.
    """
    h = fd_step(theta)
    scores = np.empty(int(replicates))
    for r in range(scores.size):
        data = simulate(theta, make_rng(seed, r))
        scores[r] = (loglik(theta + h, data) - loglik(theta - h, data)) / (2.0 * h)
    return crb_from_scores(scores)


@dataclass(frozen=True)
class CrbReport:
    theta_true: float
    crb_classic: float
    crb_inverse: float
    mc_replicates: int
    standard_errors: tuple

    @property
    def ratio(self):
        return self.crb_inverse / self.crb_classic


def crb_linear_gaussian(c_true, replicates, seed=0, setup: Optional[ScalarSetup] = None, batch=250):
    """Classic and inverse CRB for the scalar gain from the same simulated replicates."""
    setup = ScalarSetup() if setup is None else setup
    h = fd_step(c_true)
    cs = np.array([c_true - h, c_true + h])
    sc, si = [], []
    seeds = np.arange(int(replicates)) + int(seed) * 1_000_003
    for lo in range(0, seeds.size, batch):
        x, y, a = simulate_scalar_batch(setup, c_true, seeds[lo : lo + batch])
        lc = classic_grid(setup, y, cs)
        li = inverse_grid(setup, x, a, cs)
        sc.append((lc[:, 1] - lc[:, 0]) / (2 * h))
        si.append((li[:, 1] - li[:, 0]) / (2 * h))
    ec = crb_from_scores(np.concatenate(sc))
    ei = crb_from_scores(np.concatenate(si))
    return CrbReport(float(c_true), ec.crb, ei.crb, int(replicates), (ec.se, ei.se))


# ---------------------------------------------------------------------------
# particle likelihood for long HMM records
# ---------------------------------------------------------------------------


def particle_loglik_curve(model, B_of_theta, thetas, xs, actions, num_particles, seed):
    """Particle log-likelihood of ``(x, a)`` over a grid of ``theta``.

    The channel must be a quantizer (:class:`~inversefilter.model.QuantizedPolicyChannel`).
    All grid points share the same uniforms so the curve is smooth in ``theta``.
    """
    ch = model.channel
    N = len(actions)
    rng = make_rng(seed, 11)
    U = rng.random((N, int(num_particles)))
    Ur = rng.random(N)
    Bs = np.array([B_of_theta(t) for t in np.atleast_1d(thetas)])
    return kernels.particle_loglik_grid(model.P, Bs, xs, actions, ch.g, ch.thresholds, ch.confusion,
                                        model.pi0, U, Ur)


def grid_argmax_refined(grid, values):
    """Grid argmax refined by a parabola through the best point and its neighbours."""
    grid = np.asarray(grid, dtype=float)
    v = np.asarray(values, dtype=float)
    i = int(np.argmax(v))
    if 0 < i < grid.size - 1 and np.all(np.isfinite(v[i - 1 : i + 2])):
        x0, x1, x2 = grid[i - 1 : i + 2]
        y0, y1, y2 = v[i - 1 : i + 2]
        den = (x0 - x1) * (x0 - x2) * (x1 - x2)
        a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / den
        b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / den
        if a < 0:
            return float(np.clip(-b / (2 * a), x0, x2))
    return float(grid[i])


__all__ = [
    "CrbEstimate",
    "CrbReport",
    "CurveComparison",
    "LikelihoodCurve",
    "MleResult",
    "ScalarSetup",
    "crb",
    "crb_from_scores",
    "crb_linear_gaussian",
    "likelihood_curves",
    "golden_section_max",
    "grid_argmax_refined",
    "loglik_classic",
    "loglik_inverse_hmm",
    "loglik_inverse_kalman",
    "mle",
    "particle_loglik_curve",
    "simulate_scalar_batch",
]
