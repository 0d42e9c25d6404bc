"""Exact inverse HMM filter over the tree of reachable adversary beliefs.

Level ``k`` of a :class:`BeliefTree` holds every belief the adversary can
hold after ``k`` observations, plus our posterior weight on each. Children
are produced in observation order (node ``n`` at level ``k`` owns children
``n*Y .. n*Y + Y - 1``) unless merging is switched on, in which case
numerically identical beliefs collapse into one node that remembers all of
its incoming ``(parent, label)`` edges.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import filters
from .errors import CapacityError, ImpossibleActionError, ValidationError
from .model import as_probability_vector

DEFAULT_DEPTH_CAP = 12
MERGE_TOL = 1e-12


@dataclass(frozen=True)
class TreeLevel:
    pi: np.ndarray  # (n, X); rows of dead nodes are NaN
    weights: np.ndarray  # (n,)
    edge_parent: np.ndarray  # (e,) parent node index in the previous level
    edge_label: np.ndarray  # (e,) observation (or action) on the edge
    edge_child: np.ndarray  # (e,) node index in this level
    log_norm: float = 0.0  # log of the normaliser applied when weights were set

    @property
    def size(self):
        return self.pi.shape[0]

    @property
    def alive(self):
        return ~np.isnan(self.pi[:, 0])


@dataclass(frozen=True)
class BeliefTree:
    levels: tuple
    num_labels: int
    depth_cap: int = DEFAULT_DEPTH_CAP
    merge_tol: Optional[float] = None

    @classmethod
    def root(cls, pi0, num_labels, depth_cap=DEFAULT_DEPTH_CAP, merge_tol=None):
        return cls.forest([pi0], [1.0], num_labels, depth_cap, merge_tol)

    @classmethod
    def forest(cls, pis, weights, num_labels, depth_cap=DEFAULT_DEPTH_CAP, merge_tol=None):
        """Several roots with prior weights; a Dirac prior is the one-root special case."""
        pis = np.array([as_probability_vector(p, "root belief") for p in pis])
        w = as_probability_vector(weights, "root weights")
        if w.size != pis.shape[0]:
            raise ValidationError("need one weight per root belief")
        empty = np.zeros(0, dtype=np.int64)
        level = TreeLevel(pis, w, empty, empty, empty)
        return cls((level,), int(num_labels), int(depth_cap), merge_tol)

    @property
    def depth(self):
        return len(self.levels) - 1

    @property
    def leaves(self):
        return self.levels[-1]

    def with_leaves(self, level):
        return replace(self, levels=self.levels + (level,))

    def to_csv(self, path):
        """Dump every level as ``level,node_id,parent_id,y,weight,pi_0..``.

        A merged node with several incoming edges is listed once per edge.
        """
        X = self.levels[0].pi.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["level", "node_id", "parent_id", "y", "weight"] + [f"pi_{i}" for i in range(X)])
            for k, lev in enumerate(self.levels):
                if k == 0:
                    rows = [(n, "", "") for n in range(lev.size)]
                else:
                    rows = zip(lev.edge_child, lev.edge_parent, lev.edge_label)
                for n, par, lab in rows:
                    w.writerow([k, int(n), par if par == "" else int(par), lab if lab == "" else int(lab),
                                repr(float(lev.weights[n])), *[repr(float(p)) for p in lev.pi[n]]])


def _merge(pi, parents, labels, tol, group=None):
    """Collapse rows of ``pi`` equal within ``tol`` (and sharing ``group``, if given).

    Returns the merged beliefs and the merged-node index of every edge.
    """
    n = pi.shape[0]
    group = np.zeros(n) if group is None else np.asarray(group, dtype=float)
    alive = ~np.isnan(pi[:, 0])
    key = np.column_stack([group, np.where(alive[:, None], pi, np.inf)])
    order = np.lexsort(key.T[::-1])
    child = np.empty(n, dtype=np.int64)
    reps = []
    for idx in order:
        r = reps[-1] if reps else None
        if (
            r is not None
            and alive[idx]
            and alive[r]
            and group[r] == group[idx]
            and np.max(np.abs(pi[r] - pi[idx])) <= tol
        ):
            child[idx] = len(reps) - 1
        else:
            child[idx] = len(reps)
            reps.append(idx)
    return pi[np.array(reps, dtype=np.int64)], parents, labels, child


def expand_level(tree: BeliefTree, P, B):
    """Append the level of beliefs reachable by one more HMM filter update.

    Beliefs that make an observation impossible spawn a dead (NaN) child so
    the level keeps exactly ``Y^(k+1)`` slots when merging is off. Weights of
    the new level are left at zero; :func:`inverse_hmm_step` fills them.
    """
    if tree.depth + 1 > tree.depth_cap:
        raise CapacityError(f"belief tree depth {tree.depth + 1} exceeds cap {tree.depth_cap}")
    lev = tree.leaves
    Y = B.shape[1]
    parents = np.repeat(np.arange(lev.size), Y)
    labels = np.tile(np.arange(Y), lev.size)
    pis, _ = filters.hmm_filter_many(lev.pi[parents], labels, P, B)
    return tree.with_leaves(_make_level(pis, parents, labels, tree.merge_tol))


def _make_level(pis, parents, labels, merge_tol, group=None):
    if merge_tol is None:
        child = np.arange(pis.shape[0])
    else:
        pis, parents, labels, child = _merge(pis, parents, labels, merge_tol, group)
    return TreeLevel(pis, np.zeros(pis.shape[0]), parents, labels, child)


def reweight(tree: BeliefTree, edge_factor, node_factor):
    """Set leaf weights to ``node_factor * sum_edges edge_factor * alpha(parent)`` and normalise.

    ``edge_factor`` is per edge of the leaf level, ``node_factor`` per leaf.
    Shared by the HMM and social-learning inverse filters.
    """
    lev = tree.leaves
    prev = tree.levels[-2].weights
    mass = np.zeros(lev.size)
    np.add.at(mass, lev.edge_child, edge_factor * prev[lev.edge_parent])
    un = np.where(lev.alive, node_factor * mass, 0.0)
    z = un.sum()
    if not z > filters.LIKELIHOOD_FLOOR:
        raise ImpossibleActionError(f"observed action has zero probability at depth {tree.depth}")
    levels = tree.levels[:-1] + (replace(lev, weights=un / z, log_norm=float(np.log(z))),)
    return replace(tree, levels=levels)


def inverse_hmm_step(tree: BeliefTree, x_next, a_next, P, B, G):
    """Expand the tree one level and weight the new beliefs given ``(x_{k+1}, a_{k+1})``.

    ``G`` is an action channel (see :mod:`inversefilter.model`). The log of the
    normaliser is kept on the new level; summing those gives the likelihood.
    """
    tree = expand_level(tree, P, B)
    lev = tree.leaves
    edge_factor = B[int(x_next), lev.edge_label]
    pis = np.where(lev.alive[:, None], lev.pi, 0.0)
    node_factor = G.likelihood(pis)[:, int(a_next)]
    return reweight(tree, edge_factor, node_factor)


def conditional_mean(tree: BeliefTree):
    lev = tree.leaves
    alive = lev.alive
    return lev.weights[alive] @ lev.pi[alive]


def run_inverse_hmm(model, xs, actions, depth_cap=DEFAULT_DEPTH_CAP, merge_tol=None):
    """Filter a whole record; returns the final tree and the per-step conditional means."""
    tree = BeliefTree.root(model.pi0, model.num_obs, depth_cap, merge_tol)
    means = [model.pi0.copy()]
    for k, a in enumerate(actions):
        tree = inverse_hmm_step(tree, xs[k + 1], a, model.P, model.B, model.channel)
        means.append(conditional_mean(tree))
    return tree, np.array(means)
