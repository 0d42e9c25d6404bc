"""Inverse Kalman filter: our Kalman filter on the adversary's state estimate.

Substituting ``y_{k+1} = C x_{k+1} + v_{k+1}`` into the adversary's Kalman
update turns its estimate into a linear Gaussian state with known input
``x_{k+1}``::

    xhat_{k+1} = Abar_k xhat_k + Fbar_k x_{k+1} + psi_{k+1} v_{k+1}
    a_{k+1}    = Cbar_{k+1} xhat_{k+1} + eps_{k+1}

Slot ``k`` of :class:`InverseKalmanParams` holds the matrices of the
``k -> k+1`` transition, all built from the gain ``psi_{k+1}`` ("slot k uses
gain k+1"). The noise covariance is ``psi R psi'``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import filters
from .errors import ConfigError
from .model import GaussianBelief, InformationBelief, LinearGaussianModel, _cell


@dataclass(frozen=True)
class InverseKalmanParams:
    """Deterministic parameter sequence for horizon ``N``.

    ``Sigma[k]`` and ``Cbar[k]`` are indexed by time ``0..N``; ``Sigma[0]``
    is ``inf`` for a non-informative adversary prior. Transition arrays
    (``Sigma_pred``, ``psi``, ``Abar``, ``Fbar``, ``Qbar``) are indexed by slot
    ``0..N-1``.
    """

    Sigma: np.ndarray
    Sigma_pred: np.ndarray
    psi: np.ndarray
    Abar: np.ndarray
    Fbar: np.ndarray
    Qbar: np.ndarray
    Cbar: np.ndarray
    Rbar: np.ndarray

    @property
    def horizon(self):
        return self.Abar.shape[0]


def derive_inverse_params(model: LinearGaussianModel, horizon):
    """Run the adversary's covariance recursion and derive the inverse-filter matrices."""
    N = int(horizon)
    X = model.dim
    A, C, Q, R = model.A, model.C, model.Q, model.R
    Ri = np.linalg.inv(R)
    I = np.eye(X)
    Sigma = np.empty((N + 1, X, X))
    Sp = np.empty((N, X, X))
    psi = np.empty((N, X, C.shape[0]))
    if model.Sigma0 is None:
        belief = InformationBelief.noninformative(X)
        Sigma[0] = np.inf
    else:
        belief = GaussianBelief(np.zeros(X), model.Sigma0)
        Sigma[0] = model.Sigma0
    for k in range(N):
        if isinstance(belief, InformationBelief):
            pred = filters.information_predict(belief, A, Q)
            Sp[k] = np.linalg.pinv(pred.precision) if np.linalg.matrix_rank(pred.precision) == X else np.inf
            belief = filters.information_update(pred, np.zeros(C.shape[0]), C, R)
            if np.linalg.matrix_rank(belief.precision) == X:
                belief = belief.to_gaussian()
                Sigma[k + 1] = belief.cov
                psi[k] = belief.cov @ C.T @ Ri
            else:
                # Still unresolved along some direction; only possible when C
                # does not see it, so the gain there is zero.
                Sigma[k + 1] = np.inf
                psi[k] = np.linalg.pinv(belief.precision) @ C.T @ Ri
        else:
            pred = filters.kalman_predict(belief, A, Q)
            Sp[k] = pred.cov
            S = C @ pred.cov @ C.T + R
            psi[k] = pred.cov @ C.T @ filters._inv(S)
            belief = filters.kalman_update(pred, np.zeros(C.shape[0]), C, R)
            Sigma[k + 1] = belief.cov
    Abar = (I - psi @ C) @ A
    Fbar = psi @ C
    Qbar = psi @ R @ np.transpose(psi, (0, 2, 1))
    Cbar = np.array([model.phi_of(S) if np.all(np.isfinite(S)) else np.full((X, X), np.nan) for S in Sigma])
    Rbar = model.sigma_eps2 * np.eye(X)
    return InverseKalmanParams(Sigma, Sp, psi, Abar, Fbar, Qbar, Cbar, Rbar)


@dataclass(frozen=True)
class InverseKalmanState:
    """Our estimate of the adversary's estimate; ``belief`` may be in information form."""

    belief: object

    @classmethod
    def exact(cls, xhat0):
        """The adversary's initial estimate is known to us (``Sigmabar_0 = 0``)."""
        x = np.atleast_1d(np.asarray(xhat0, dtype=float))
        return cls(GaussianBelief(x, np.zeros((x.size, x.size))))

    @classmethod
    def noninformative(cls, dim):
        return cls(InformationBelief.noninformative(dim))

    def gaussian(self):
        b = self.belief
        return b.to_gaussian() if isinstance(b, InformationBelief) else b


def _slot(params, k):
    return params.Abar[k], params.Fbar[k], params.Qbar[k], params.Cbar[k + 1]


def inverse_kalman_step(state: InverseKalmanState, a_next, x_next, params: InverseKalmanParams, k):
    """Advance from time ``k`` to ``k+1`` using action ``a_{k+1}`` and our state ``x_{k+1}``.

    Returns ``(state, innovation, innovation_cov)``; the innovation is
    ``a_{k+1} - Cbar_{k+1} (Abar_k xhathat_k + Fbar_k x_{k+1})``.
    """
    Ab, Fb, Qb, Cb = _slot(params, k)
    u = Fb @ np.atleast_1d(x_next)
    a = np.atleast_1d(a_next)
    b = state.belief
    if isinstance(b, InformationBelief):
        pred = filters.information_predict(b, Ab, Qb, u)
        post = filters.information_update(pred, a, Cb, params.Rbar)
        if np.linalg.matrix_rank(pred.precision) == pred.precision.shape[0]:
            pg = pred.to_gaussian()
            innov = a - Cb @ pg.mean
            S = Cb @ pg.cov @ Cb.T + params.Rbar
        else:
            innov, S = np.full(a.shape, np.nan), np.full((a.size, a.size), np.inf)
        if np.linalg.matrix_rank(post.precision) == post.precision.shape[0]:
            post = post.to_gaussian()
        return InverseKalmanState(post), innov, S
    pred = filters.kalman_predict(b, Ab, Qb, u)
    innov = a - Cb @ pred.mean
    S = Cb @ pred.cov @ Cb.T + params.Rbar
    return InverseKalmanState(filters.kalman_update(pred, a, Cb, params.Rbar)), innov, S


def localization_covariance_recursion(Sigmabar_k, k, snr_next):
    """Scalar ``A = C = 1, Q = 0, R = 1`` case of the inverse covariance update."""
    num = k * k * Sigmabar_k + 1.0 if k else 1.0
    return num / ((k + 1) ** 2 + snr_next * num)


def localization_covariance_track(horizon, snr):
    """``Sigmabar_1..Sigmabar_N``; ``snr`` is a callable of the new time index ``k+1``."""
    out = np.empty(horizon)
    s = np.inf
    for k in range(horizon):
        s = localization_covariance_recursion(s, k, snr(k + 1))
        out[k] = s
    return out


@dataclass
class InverseKalmanRun:
    xhat_adversary: np.ndarray
    xhathat: np.ndarray
    Sigma_adversary: np.ndarray
    Sigmabar: np.ndarray
    innovations: np.ndarray
    innovation_cov: np.ndarray

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "xhat_adversary", "xhathat", "Sigma_adversary", "Sigmabar"])
            for k in range(len(self.xhathat)):
                w.writerow([k, _cell(self.xhat_adversary[k]), _cell(self.xhathat[k]),
                            _cell(self.Sigma_adversary[k]), _cell(self.Sigmabar[k])])


def run_inverse_kalman(model: LinearGaussianModel, record, Sigmabar0=0.0, params=None):
    """Run the inverse filter over a simulated record.

    ``Sigmabar0=0`` means the adversary's initial estimate ``model.xhat0`` is
    known; ``None`` starts from zero precision.
    """
    N = record.horizon
    X = model.dim
    params = derive_inverse_params(model, N) if params is None else params
    if Sigmabar0 is None:
        state = InverseKalmanState.noninformative(X)
    elif np.all(np.asarray(Sigmabar0) == 0):
        state = InverseKalmanState.exact(model.xhat0)
    else:
        state = InverseKalmanState(GaussianBelief(model.xhat0, np.atleast_2d(Sigmabar0) * np.eye(X)))
    xs = np.asarray(record.x, dtype=float).reshape(N + 1, X)
    acts = np.asarray(record.a, dtype=float).reshape(N, X)
    means = np.empty((N + 1, X))
    covs = np.empty((N + 1, X, X))
    innov = np.empty((N, X))
    S = np.empty((N, X, X))
    g = state.gaussian() if not isinstance(state.belief, InformationBelief) else None
    means[0], covs[0] = (g.mean, g.cov) if g is not None else (model.xhat0, np.inf)
    for k in range(N):
        state, innov[k], S[k] = inverse_kalman_step(state, acts[k], xs[k + 1], params, k)
        b = state.belief
        if isinstance(b, InformationBelief):
            raise ConfigError("inverse filter prior not resolved after one action; Cbar must be invertible")
        means[k + 1], covs[k + 1] = b.mean, b.cov
    return InverseKalmanRun(np.asarray(record.pi), means, params.Sigma, covs, innov, S)
