"""Probe-signal design: dominance orderings of transition matrices and SPSA search.

The ordering side certifies that one probe transition matrix yields
MLR-smaller adversary beliefs (hence a smaller action SNR) than another.
The numerical side minimises the spread of our estimate of the adversary's
sensor over a spherical parametrisation of the transition matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from typing import Callable, Optional

import numpy as np
from scipy import optimize

from .errors import ConfigError, ValidationError
from .estimation import grid_argmax_refined, particle_loglik_curve
from .model import (
    AdversaryPolicy,
    HMMModel,
    QuantizedPolicyChannel,
    _draw_rows,
    as_stochastic_matrix,
    make_rng,
    simulate_chain,
)
from . import filters

TP2_TOL = 1e-12


# ---------------------------------------------------------------------------
# orderings
# ---------------------------------------------------------------------------


def is_tp2(P, tol=TP2_TOL):
    """Every 2x2 minor ``P[m,j] P[n,l] - P[m,l] P[n,j]`` (m<n, j<l) is ``>= -tol``."""
    P = np.asarray(P, dtype=float)
    r, c = P.shape
    for m, n in combinations(range(r), 2):
        for j, l in combinations(range(c), 2):
            if P[m, j] * P[n, l] - P[m, l] * P[n, j] < -tol:
                return False
    return True


def mlr_dominates(pi1, pi2, tol=1e-12):
    """``pi1 >=_lr pi2``: ``pi1(i) pi2(j) <= pi2(i) pi1(j)`` for every ``i < j``."""
    a = np.asarray(pi1, dtype=float)
    b = np.asarray(pi2, dtype=float)
    lhs = np.outer(a, b)  # lhs[i, j] = pi1(i) pi2(j)
    diff = lhs - lhs.T  # pi1(i)pi2(j) - pi2(i)pi1(j)
    return bool(np.all(np.triu(diff, 1) <= tol))


def first_order_dominates(pi1, pi2, tol=1e-12):
    """Upper-tail sums of ``pi1`` are at least those of ``pi2``."""
    t1 = np.cumsum(np.asarray(pi1)[::-1])
    t2 = np.cumsum(np.asarray(pi2)[::-1])
    return bool(np.all(t1 >= t2 - tol))


def dominance_matrices(P1, P2):
    """``L^j = (gamma^j + gamma^j') / 2`` with ``gamma^j[m,n] = P1[m,j] P2[n,j+1] - P1[m,j+1] P2[n,j]``."""
    P1 = np.asarray(P1, dtype=float)
    P2 = np.asarray(P2, dtype=float)
    if P1.shape != P2.shape:
        raise ValidationError("transition matrices must have the same shape")
    out = []
    for j in range(P1.shape[1] - 1):
        g = np.outer(P1[:, j], P2[:, j + 1]) - np.outer(P1[:, j + 1], P2[:, j])
        out.append(0.5 * (g + g.T))
    return out


@dataclass(frozen=True)
class CopositivityCertificate:
    j: int
    L: np.ndarray
    verdict: str  # "copositive", "not-copositive" or "inconclusive"
    min_value: float  # smallest quadratic form found on the simplex
    witness: np.ndarray  # simplex point attaining min_value
    method: str


@lru_cache(maxsize=16)
def _compositions(n, parts):
    """All non-negative integer vectors of length ``parts`` summing to ``n``."""
    # sorted cut points 0 <= s_1 <= ... <= s_{parts-1} <= n, parts = gaps
    cuts = np.zeros((1, 0), dtype=np.int32)
    for _ in range(parts - 1):
        last = cuts[:, -1] if cuts.shape[1] else np.zeros(len(cuts), dtype=np.int32)
        reps = n + 1 - last
        base = np.repeat(cuts, reps, axis=0)
        start = np.repeat(last, reps)
        offs = np.arange(reps.sum()) - np.repeat(np.cumsum(reps) - reps, reps)
        cuts = np.column_stack([base, start + offs]).astype(np.int32)
    full = np.column_stack([np.zeros(len(cuts), dtype=np.int32), cuts, np.full(len(cuts), n, dtype=np.int32)])
    return np.diff(full, axis=1)


def _simplex_grid(X, step_count, chunk=500_000):
    """Simplex points with coordinates in multiples of ``1/step_count``, in chunks."""
    pts = _compositions(int(step_count), int(X))
    for i in range(0, len(pts), chunk):
        yield pts[i : i + chunk] / float(step_count)


def _refine(L, start):
    """Local minimum of ``pi' L pi`` on the simplex from ``start`` (SLSQP)."""
    X = L.shape[0]
    res = optimize.minimize(
        lambda p: p @ L @ p,
        start,
        jac=lambda p: 2 * L @ p,
        method="SLSQP",
        bounds=[(0.0, 1.0)] * X,
        constraints=[{"type": "eq", "fun": lambda p: p.sum() - 1.0, "jac": lambda p: np.ones(X)}],
        options={"ftol": 1e-14, "maxiter": 500},
    )
    p = np.clip(res.x, 0.0, None)
    p /= p.sum()
    return p, float(p @ L @ p)


def _two_state_min(L):
    """Exact minimum of ``q(t) = (1-t, t) L (1-t, t)'`` on ``[0, 1]``."""
    a, b, c = L[0, 0], L[0, 1], L[1, 1]
    cands = [0.0, 1.0]
    curv = a - 2 * b + c
    if curv > 0:
        t = (a - b) / curv
        if 0 < t < 1:
            cands.append(t)
    pts = [np.array([1 - t, t]) for t in cands]
    vals = [float(p @ L @ p) for p in pts]
    i = int(np.argmin(vals))
    return pts[i], vals[i]


def _hadeler(L):
    """Exact copositivity test for symmetric 3x3 matrices."""
    d = np.diag(L)
    if np.any(d < 0):
        return False
    s = np.sqrt(d)
    a12, a13, a23 = L[0, 1], L[0, 2], L[1, 2]
    if a12 < -s[0] * s[1] or a13 < -s[0] * s[2] or a23 < -s[1] * s[2]:
        return False
    t = (a12 + s[0] * s[1]) * (a13 + s[0] * s[2]) * (a23 + s[1] * s[2])
    return s[0] * s[1] * s[2] + a12 * s[2] + a13 * s[1] + a23 * s[0] + math.sqrt(max(2.0 * t, 0.0)) >= -TP2_TOL


def check_copositive(L, j=0, grid_steps=200, margin=1e-9, max_grid_points=3_000_000):
    """Decide whether ``pi' L pi >= 0`` on the simplex.

    Two states: exact. Three states: exact verdict plus a located minimum.
    Four or more: simplex grid (step ``1/grid_steps``, coarsened if the grid
    would exceed ``max_grid_points``) followed by local refinement from the
    best grid points; a minimum within ``margin`` of zero is reported as
    inconclusive unless an exact sufficient condition applies.
    """
    L = np.asarray(L, dtype=float)
    X = L.shape[0]
    if X == 2:
        w, v = _two_state_min(L)
        ok = L[0, 0] >= -TP2_TOL and L[1, 1] >= -TP2_TOL and L[0, 1] >= -math.sqrt(max(L[0, 0] * L[1, 1], 0.0)) - TP2_TOL
        return CopositivityCertificate(j, L, "copositive" if ok else "not-copositive", v, w, "exact-2")
    n = int(grid_steps)
    while math.comb(n + X - 1, X - 1) > max_grid_points and n > 2:
        n //= 2
    best = []
    for pts in _simplex_grid(X, n):
        q = np.einsum("ni,ij,nj->n", pts, L, pts)
        k = min(5, q.size)
        idx = np.argpartition(q, k - 1)[:k]
        best.extend((float(q[i]), pts[i]) for i in idx)
        best = sorted(best, key=lambda t: t[0])[:5]
    cands = [_refine(L, p) for _, p in best] + [(p, v) for v, p in best]
    witness, m = min(cands, key=lambda t: t[1])
    if X == 3:
        verdict = "copositive" if _hadeler(L) else "not-copositive"
        return CopositivityCertificate(j, L, verdict, m, witness, "exact-3")
    if np.all(L >= -TP2_TOL) or np.linalg.eigvalsh(L).min() >= -TP2_TOL:
        verdict = "copositive"
    elif m < -margin:
        verdict = "not-copositive"
    elif m > margin:
        verdict = "copositive"
    else:
        verdict = "inconclusive"
    return CopositivityCertificate(j, L, verdict, m, witness, f"grid-{n}+refine")


def copositive_dominates(P1, P2, **kw):
    """Whether ``P1`` is copositively dominated by ``P2``; returns ``(bool, certificates)``.

    The boolean is true only if every ``L^j`` is certified copositive.
    """
    certs = [check_copositive(L, j, **kw) for j, L in enumerate(dominance_matrices(P1, P2))]
    return all(c.verdict == "copositive" for c in certs), certs


def certificates_to_rows(certs):
    return [(c.j, c.min_value, " ".join(repr(float(v)) for v in c.witness)) for c in certs]


# ---------------------------------------------------------------------------
# example constructions
# ---------------------------------------------------------------------------


def tp2_example_pair():
    return np.array([[0.8, 0.2], [0.7, 0.3]]), np.array([[0.2, 0.8], [0.1, 0.9]])


def absorbing_example_pair(p=0.3, q=0.7):
    return np.array([[1.0, 0.0], [1 - p, p]]), np.array([[1.0, 0.0], [1 - q, q]])


def stopping_matrix(theta):
    """Absorbing first state; row ``i >= 2`` moves to every other state w.p. ``theta_i``.

    ``theta`` lists ``theta_2..theta_X``. The matrix is TP2 when ``theta`` is non-decreasing.
    """
    theta = np.asarray(theta, dtype=float)
    X = theta.size + 1
    if np.any(theta < 0) or np.any(theta > 1.0 / (X - 1)):
        raise ValidationError(f"theta entries must lie in [0, 1/(X-1)], got {theta}")
    P = np.zeros((X, X))
    P[0, 0] = 1.0
    for i, t in enumerate(theta, start=1):
        P[i, :] = t
        P[i, 0] = 1.0 - (X - 1) * t
    return P


def mlr_top_matrix(vectors, X):
    """Transition matrix made of the ``X`` MLR-largest of MLR-ordered ``vectors``."""
    v = np.asarray(vectors, dtype=float)
    for a, b in zip(v[:-1], v[1:]):
        if not mlr_dominates(b, a):
            raise ValidationError("vectors must be listed in increasing MLR order")
    return as_stochastic_matrix(v[-X:], square=True)


def mlr_matrix_from(vectors, rows):
    """Transition matrix from chosen rows (kept in increasing order so it stays TP2)."""
    v = np.asarray(vectors, dtype=float)
    return as_stochastic_matrix(v[np.sort(np.asarray(rows))], square=True)


# ---------------------------------------------------------------------------
# spherical parametrisation
# ---------------------------------------------------------------------------


def spherical_to_stochastic(theta):
    """Row ``i``: ``cos^2 t_i1``, ``cos^2 t_ij prod_{l<j} sin^2 t_il``, last ``prod sin^2``.

    Leading axes are batch axes: ``(..., X, X-1)`` maps to ``(..., X, X)``.
    """
    th = np.asarray(theta, dtype=float)
    if th.ndim < 2:
        th = np.atleast_2d(th)
    X = th.shape[-2]
    if th.shape[-1] != X - 1:
        raise ValidationError(f"spherical parameters must be X x (X-1), got {th.shape[-2:]}")
    s2 = np.sin(th) ** 2
    ones = np.ones(th.shape[:-1] + (1,))
    caps = np.concatenate([ones, np.cumprod(s2, axis=-1)], axis=-1)  # prod of sin^2 before j
    return caps * np.concatenate([np.cos(th) ** 2, ones], axis=-1)


def stochastic_to_spherical(P):
    """One preimage of ``P`` under :func:`spherical_to_stochastic` (angles in ``[0, pi/2]``)."""
    P = as_stochastic_matrix(P)
    X = P.shape[0]
    th = np.zeros((X, X - 1))
    for i in range(X):
        rest = 1.0
        for j in range(X - 1):
            c2 = 0.0 if rest <= 0 else np.clip(P[i, j] / rest, 0.0, 1.0)
            th[i, j] = math.acos(math.sqrt(c2))
            rest *= 1.0 - c2
    return th


# ---------------------------------------------------------------------------
# SNR and sample-path checks
# ---------------------------------------------------------------------------


def coupled_beliefs(P, B, pi0, Ux0, Ux, Uy):
    """Adversary beliefs for ``R`` replicates driven by given uniforms.

    ``Ux0`` (R,), ``Ux`` and ``Uy`` (R, N). The state moves by inverse CDF of
    ``P``'s row and the observation by inverse CDF of ``B``'s row, so two
    transition matrices fed the same uniforms form a monotone coupling.
    Returns ``(x, beliefs)`` with shapes ``(R, N+1)`` and ``(R, N+1, X)``.
    """
    P = np.asarray(P, dtype=float)
    B = np.asarray(B, dtype=float)
    R, N = Ux.shape
    X = P.shape[0]
    Pc, Bc = np.cumsum(P, 1), np.cumsum(B, 1)
    x = np.empty((R, N + 1), dtype=int)
    pis = np.empty((R, N + 1, X))
    x[:, 0] = _draw_rows(np.cumsum(pi0)[None], np.zeros(R, dtype=int), Ux0)
    pis[:, 0] = pi0
    for k in range(N):
        x[:, k + 1] = _draw_rows(Pc, x[:, k], Ux[:, k])
        y = _draw_rows(Bc, x[:, k + 1], Uy[:, k])
        new, z = filters.hmm_filter_many(pis[:, k], y, P, B)
        if np.any(np.isnan(new)):
            raise ValidationError("observation with zero likelihood in coupled simulation")
        pis[:, k + 1] = new
    return x, pis


def _uniforms(seed, R, N):
    rng = make_rng(seed, 5)
    return rng.random(R), rng.random((R, N)), rng.random((R, N))


@dataclass(frozen=True)
class SnrEstimate:
    value: float
    se: float
    replicates: int


def empirical_snr(P, B, pi0, policy: AdversaryPolicy, sigma_eps2, horizon, replicates, seed, burn_in=20):
    """``E[u_k^2] / sigma_eps^2`` averaged over ``k > burn_in`` and replicates, with its standard error."""
    if not isinstance(policy, AdversaryPolicy):
        raise ValidationError("policy must be an AdversaryPolicy")
    if sigma_eps2 <= 0:
        raise ValidationError("sigma_eps2 must be positive")
    Ux0, Ux, Uy = _uniforms(seed, int(replicates), int(horizon))
    _, pis = coupled_beliefs(P, B, np.asarray(pi0, dtype=float), Ux0, Ux, Uy)
    u = policy(pis[:, burn_in + 1 :])
    per_rep = np.mean(u**2, axis=1) / sigma_eps2
    se = float(np.std(per_rep, ddof=1) / math.sqrt(per_rep.size)) if per_rep.size > 1 else float("nan")
    return SnrEstimate(float(per_rep.mean()), se, per_rep.size)


def samplewise_mlr_ordering_check(P1, P2, B, pi0, horizon, seeds):
    """Fraction of ``(seed, k)`` pairs where ``pi^{P2}_k >=_lr pi^{P1}_k`` fails under common uniforms."""
    seeds = np.atleast_1d(seeds)
    bad = 0
    total = 0
    for sd in seeds:
        Ux0, Ux, Uy = _uniforms(int(sd), 1, int(horizon))
        _, p1 = coupled_beliefs(P1, B, pi0, Ux0, Ux, Uy)
        _, p2 = coupled_beliefs(P2, B, pi0, Ux0, Ux, Uy)
        for k in range(1, int(horizon) + 1):
            total += 1
            bad += not mlr_dominates(p2[0, k], p1[0, k])
    return bad / total


def samplewise_score_ordering(P1, P2, B, pi0, g, horizon, seeds):
    """Fraction of coupled sample points where ``g' pi^{P1}_k > g' pi^{P2}_k``."""
    seeds = np.atleast_1d(seeds)
    Ux0, Ux, Uy = _uniforms(int(seeds[0]), seeds.size, int(horizon))
    _, p1 = coupled_beliefs(P1, B, pi0, Ux0, Ux, Uy)
    _, p2 = coupled_beliefs(P2, B, pi0, Ux0, Ux, Uy)
    g = np.asarray(g, dtype=float)
    return float(np.mean(p1[:, 1:] @ g > p2[:, 1:] @ g + 1e-12))


# ---------------------------------------------------------------------------
# SPSA
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpsaConfig:
    """Gains ``Delta_n = delta/(n+1)^gamma`` and ``eps_n = eps/(n+1+s)^zeta``."""

    delta: float = 0.1
    gamma: float = 0.602
    eps: float = 0.1
    s: float = 10.0
    zeta: float = 0.7
    iterations: int = 200
    horizon: int = 200
    replicates: int = 8

    def __post_init__(self):
        if not 0.5 <= self.gamma <= 1.0:
            raise ConfigError("gamma must lie in [0.5, 1]")
        if not 0.5 < self.zeta <= 1.0:
            raise ConfigError("zeta must lie in (0.5, 1]")
        if not (self.delta > 0 and self.eps > 0 and self.s >= 0):
            raise ConfigError("delta and eps must be positive, s non-negative")
        if self.iterations < 0 or self.horizon < 1 or self.replicates < 2:
            raise ConfigError("need iterations >= 0, horizon >= 1 and replicates >= 2")

    def perturbation(self, n):
        return self.delta / (n + 1) ** self.gamma

    def step(self, n):
        return self.eps / (n + 1 + self.s) ** self.zeta


@dataclass
class SpsaTrace:
    thetas: list = field(default_factory=list)  # iterate before each update, then the final one
    values: list = field(default_factory=list)  # (J+ + J-)/2 per iteration, NaN if skipped
    skipped: int = 0
    evaluations: int = 0


class CountingObjective:
    def __init__(self, f):
        self.f = f
        self.calls = 0

    def __call__(self, theta, seed):
        self.calls += 1
        return self.f(theta, seed)


def rademacher(rng, shape):
    return rng.integers(0, 2, size=shape) * 2.0 - 1.0


def spsa_gradient(objective, theta, delta, d, seed):
    """Two-sided simultaneous-perturbation gradient; both sides share ``seed``."""
    jp = objective(theta + delta * d, seed)
    jm = objective(theta - delta * d, seed)
    return (jp - jm) / (2.0 * delta) * d, jp, jm


def spsa_optimize(config: SpsaConfig, objective: Callable, theta0, seed=0):
    """Minimise ``objective(theta, seed)`` with SPSA; returns ``(theta, trace)``.

    Each iteration costs exactly two evaluations sharing one seed (common
    random numbers). A non-finite evaluation skips the update but the gain
    schedules still advance.
    """
    theta = np.array(theta0, dtype=float)
    rng = make_rng(seed, 3)
    counted = CountingObjective(objective)
    trace = SpsaTrace()
    for n in range(int(config.iterations)):
        trace.thetas.append(theta.copy())
        d = rademacher(rng, theta.shape)
        it_seed = int(rng.integers(0, 2**63 - 1))
        g, jp, jm = spsa_gradient(counted, theta, config.perturbation(n), d, it_seed)
        if not (np.isfinite(jp) and np.isfinite(jm)):
            trace.skipped += 1
            trace.values.append(float("nan"))
            continue
        trace.values.append(0.5 * (jp + jm))
        theta = theta - config.step(n) * g
    trace.thetas.append(theta.copy())
    trace.evaluations = counted.calls
    assert trace.evaluations == 2 * int(config.iterations)
    return theta, trace


def moving_average(values, window=20):
    v = np.asarray(values, dtype=float)
    return np.convolve(v, np.ones(window) / window, mode="valid")


# ---------------------------------------------------------------------------
# probe objective
# ---------------------------------------------------------------------------


def symmetric_sensor(t):
    return np.array([[t, 1.0 - t], [1.0 - t, t]])


@dataclass
class ProbeObjective:
    """Sample variance of our sensor estimate across replicate records for a probe ``P(theta)``.

    The adversary's sensor is the symmetric 2x2 kernel with accuracy
    ``theta_B``; it acts by thresholding its belief in state 2 and we read its
    action through ``confusion``. Each replicate's estimate is the refined grid
    maximiser of a particle log-likelihood.
    """

    theta_B: float = 0.8
    horizon: int = 200
    replicates: int = 8
    particles: int = 128
    grid: np.ndarray = field(default_factory=lambda: np.linspace(0.55, 0.99, 24))
    g: tuple = (0.0, 1.0)
    threshold: float = 0.5
    confusion: np.ndarray = field(default_factory=lambda: np.array([[0.9, 0.1], [0.1, 0.9]]))
    pi0: tuple = (0.5, 0.5)

    def model(self, P, theta_B=None):
        t = self.theta_B if theta_B is None else theta_B
        ch = QuantizedPolicyChannel(self.g, [self.threshold], self.confusion)
        return HMMModel(P, symmetric_sensor(t), self.pi0, ch)

    def estimates(self, theta, seed):
        P = spherical_to_stochastic(np.reshape(theta, (2, 1)))
        m = self.model(P)
        out = np.empty(self.replicates)
        for r in range(self.replicates):
            rec = simulate_chain(m, self.horizon, (int(seed) + 7919 * r) % 2**63)
            ll = particle_loglik_curve(m, symmetric_sensor, self.grid, rec.x, rec.a, self.particles,
                                       (int(seed) + 104729 * r) % 2**63)
            out[r] = grid_argmax_refined(self.grid, ll) if np.any(np.isfinite(ll)) else np.nan
        return out

    def __call__(self, theta, seed):
        est = self.estimates(theta, seed)
        if np.any(~np.isfinite(est)):
            return float("nan")
        return float(np.var(est, ddof=1))


STICKY_START = np.array([math.acos(math.sqrt(0.95)), math.acos(math.sqrt(0.05))])
