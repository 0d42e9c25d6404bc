"""Bayesian social learning with myopic agents, and its inverse filter.

Agent ``k`` sees a private observation, forms a private belief from the
public belief, takes the cheapest action and everybody (but us) sees that
action. We see it through the confusion matrix ``G_ua``. The inverse filter
reuses the belief-tree machinery with actions as edge labels.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from itertools import product

import numpy as np

from . import filters
from .errors import CapacityError, ConfigError, ImpossibleActionError
from .inverse_hmm import BeliefTree, DEFAULT_DEPTH_CAP, _make_level, reweight
from .model import TrajectoryRecord, _draw_rows, as_probability_vector, as_stochastic_matrix, make_rng


@dataclass
class SocialModel:
    P: np.ndarray
    B: np.ndarray
    costs: np.ndarray  # (X, A): column u is the cost vector c_u
    G_ua: np.ndarray  # (A, A): P(a | u)
    pi0: np.ndarray

    def __post_init__(self):
        self.P = as_stochastic_matrix(self.P, "P")
        self.B = as_stochastic_matrix(self.B, "B", square=False)
        self.costs = np.atleast_2d(np.asarray(self.costs, dtype=float))
        self.G_ua = as_stochastic_matrix(self.G_ua, "G_ua")
        self.pi0 = as_probability_vector(self.pi0, "pi0")
        X = self.P.shape[0]
        if self.B.shape[0] != X or self.costs.shape[0] != X or self.pi0.size != X:
            raise ConfigError("social model dimensions disagree")
        if self.G_ua.shape[0] != self.costs.shape[1]:
            raise ConfigError("G_ua must be A x A with A the number of cost columns")

    @property
    def num_actions(self):
        return self.costs.shape[1]


def private_belief(pi, y, P, B):
    return filters.hmm_filter_step(pi, y, P, B)


def myopic_action(eta, costs):
    """Cheapest action under belief ``eta``; ``argmin`` already breaks ties to the lowest index."""
    return int(np.argmin(np.asarray(eta) @ np.atleast_2d(costs)))


def _actions_per_observation(pis, P, B, costs):
    """``(n, Y)`` myopic action for each belief and each private observation.

    An observation impossible under a belief cannot occur from it; it is sent
    to the action chosen on the prediction alone, which never matters because
    it carries zero probability.
    """
    pred = np.atleast_2d(pis) @ P
    eta = pred[:, None, :] * B.T[None, :, :]  # (n, Y, X)
    z = eta.sum(axis=2, keepdims=True)
    eta = np.where(z > filters.LIKELIHOOD_FLOOR, eta / np.where(z > 0, z, 1.0), pred[:, None, :])
    return np.argmin(eta @ costs, axis=2)


def action_likelihoods(pis, model: SocialModel):
    """``(n, A, X)`` array with entries ``P(u | x = i, pi) = sum_y B[i, y] 1{u(pi, y) = u}``."""
    acts = _actions_per_observation(pis, model.P, model.B, model.costs)
    onehot = acts[:, :, None] == np.arange(model.num_actions)[None, None, :]  # (n, Y, A)
    return np.einsum("iy,nyu->nui", model.B, onehot.astype(float))


def social_learning_update(pis, model, u):
    """Vectorised public-belief update; returns ``(beliefs, sigma)``, NaN rows where ``sigma = 0``."""
    pis = np.atleast_2d(pis)
    n = pis.shape[0]
    u = np.broadcast_to(np.asarray(u, dtype=np.int64), (n,))
    R = action_likelihoods(pis, model)[np.arange(n), u, :]
    un = R * (pis @ model.P)
    s = un.sum(axis=1)
    ok = s > filters.LIKELIHOOD_FLOOR
    out = np.full_like(un, np.nan)
    out[ok] = un[ok] / s[ok, None]
    return out, s


def social_learning_step(pi, u, model: SocialModel):
    out, s = social_learning_update(np.asarray(pi)[None, :], model, np.array([int(u)]))
    if not s[0] > filters.LIKELIHOOD_FLOOR:
        raise ImpossibleActionError(f"action {u} has zero probability from belief {pi}")
    return out[0]


# ---------------------------------------------------------------------------
# regions of constant action likelihood
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Region:
    """``lo <= pi(2) < hi`` for two states; for larger X, a set of grid points."""

    lo: float
    hi: float
    R: np.ndarray  # (A, X) action likelihoods valid throughout the region
    points: np.ndarray = None


def _two_state_breakpoints(model):
    """Values of ``p = pi(2)`` where two actions tie for some observation."""
    P, B, c = model.P, model.B, model.costs
    base, slope = P[0], P[1] - P[0]  # P'pi = base + p * slope
    pts = []
    A = model.num_actions
    for y in range(B.shape[1]):
        for u in range(A):
            for v in range(u + 1, A):
                d = (c[:, u] - c[:, v]) * B[:, y]
                a0, a1 = d @ base, d @ slope
                if a1 != 0:
                    p = -a0 / a1
                    if 0 < p < 1:
                        pts.append(p)
    return np.unique(pts)


def partition_likelihood_regions(model: SocialModel, grid=None):
    """Partition the simplex into regions where the action likelihoods are constant.

    Two states: exact breakpoints, one interval per distinct likelihood matrix
    (adjacent intervals with equal matrices are fused). More states: group the
    points of a simplex grid with ``grid`` subdivisions by likelihood matrix.
    """
    X = model.P.shape[0]
    if X == 2:
        edges = np.concatenate([[0.0], _two_state_breakpoints(model), [1.0]])
        regions = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            mid = 0.5 * (lo + hi)
            R = action_likelihoods(np.array([[1 - mid, mid]]), model)[0]
            if regions and np.array_equal(regions[-1].R, R):
                regions[-1] = Region(regions[-1].lo, hi, R)
            else:
                regions.append(Region(float(lo), float(hi), R))
        return regions
    n = 30 if grid is None else int(grid)
    pts = np.array([c for c in product(range(n + 1), repeat=X - 1) if sum(c) <= n], dtype=float) / n
    pts = np.column_stack([1 - pts.sum(axis=1), pts])
    Rs = action_likelihoods(pts, model)
    keys = {}
    for p, R in zip(pts, Rs):
        keys.setdefault(R.tobytes(), (R, []))[1].append(p)
    return [Region(np.nan, np.nan, R, np.array(ps)) for R, ps in keys.values()]


def regions_to_csv(regions, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        A, X = regions[0].R.shape
        w.writerow(["lo", "hi"] + [f"R_{u}_{i}" for u in range(A) for i in range(X)])
        for r in regions:
            w.writerow([repr(r.lo), repr(r.hi), *[repr(float(v)) for v in r.R.ravel()]])


# ---------------------------------------------------------------------------
# inverse filter
# ---------------------------------------------------------------------------


def social_tree(model, depth_cap=DEFAULT_DEPTH_CAP, merge_tol=None):
    return BeliefTree.root(model.pi0, model.num_actions, depth_cap, merge_tol)


def inverse_social_step(tree: BeliefTree, x_next, a_next, model: SocialModel):
    """Expand the action tree and weight children by ``G[u, a] P(u | x_{k+1}, parent)``.

    Merging (when enabled on the tree) only fuses children reached by the same action.
    """
    if tree.depth + 1 > tree.depth_cap:
        raise CapacityError(f"action tree depth {tree.depth + 1} exceeds cap {tree.depth_cap}")
    lev = tree.leaves
    A = model.num_actions
    parents = np.repeat(np.arange(lev.size), A)
    labels = np.tile(np.arange(A), lev.size)
    ppis = np.where(lev.alive[:, None], lev.pi, 1.0 / lev.pi.shape[1])
    lik = action_likelihoods(ppis, model)  # (n, A, X)
    pis, _ = social_learning_update(ppis[parents], model, labels)
    pis[~lev.alive[parents]] = np.nan
    new = _make_level(pis, parents, labels, tree.merge_tol, group=labels)
    tree = tree.with_leaves(new)
    edge_factor = lik[new.edge_parent, new.edge_label, int(x_next)]
    # every edge into a node carries the same action, so any edge gives the node's label
    node_label = np.empty(new.size, dtype=np.int64)
    node_label[new.edge_child] = new.edge_label
    node_factor = model.G_ua[node_label, int(a_next)]
    return reweight(tree, edge_factor, node_factor)


def simulate_social(model: SocialModel, horizon, seed, x0=None):
    """Run the protocol; ``pi`` in the record holds the public beliefs."""
    rng = make_rng(seed, 0)
    N = int(horizon)
    Pc, Bc, Gc = np.cumsum(model.P, 1), np.cumsum(model.B, 1), np.cumsum(model.G_ua, 1)
    x = np.empty(N + 1, dtype=int)
    y = np.empty(N, dtype=int)
    u = np.empty(N, dtype=int)
    a = np.empty(N, dtype=int)
    pi = np.empty((N + 1, model.P.shape[0]))
    x[0] = _draw_rows(np.cumsum(model.pi0)[None], 0, rng.random()) if x0 is None else int(x0)
    pi[0] = model.pi0
    for k in range(1, N + 1):
        x[k] = _draw_rows(Pc, x[k - 1], rng.random())
        y[k - 1] = _draw_rows(Bc, x[k], rng.random())
        u[k - 1] = myopic_action(private_belief(pi[k - 1], y[k - 1], model.P, model.B), model.costs)
        pi[k] = social_learning_step(pi[k - 1], u[k - 1], model)
        a[k - 1] = _draw_rows(Gc, u[k - 1], rng.random())
    return TrajectoryRecord(x, y, pi, u, a, int(seed))
