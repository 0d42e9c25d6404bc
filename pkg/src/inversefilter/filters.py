"""Forward filters run by the adversary: HMM, Kalman and information-form Kalman."""

import numpy as np

from .errors import ImpossibleObservationError, SingularMatrixError

LIKELIHOOD_FLOOR = 1e-300


def hmm_predict(pi, P):
    return np.asarray(pi) @ P


def hmm_filter_step(pi, y, P, B):
    """One HMM filter update ``T(pi, y) = B_y P' pi / 1' B_y P' pi``.

    Raises :class:`ImpossibleObservationError` when the normaliser falls below
    ``LIKELIHOOD_FLOOR`` instead of renormalising garbage.
    """
    un = B[:, y] * (np.asarray(pi) @ P)
    z = un.sum()
    if not z > LIKELIHOOD_FLOOR:
        raise ImpossibleObservationError(f"observation {y} has likelihood {z:.3g} under belief {pi}")
    return un / z


def hmm_filter_many(pis, ys, P, B):
    """Vectorised :func:`hmm_filter_step` for beliefs ``pis`` (M, X) and labels ``ys`` (M,).

    Returns ``(posteriors, normalisers)``; rows whose normaliser is below the
    floor are returned as NaN and the caller decides what that means.
    """
    pred = np.asarray(pis) @ P
    un = B[:, ys].T * pred
    z = un.sum(axis=1)
    ok = z > LIKELIHOOD_FLOOR
    out = np.full_like(un, np.nan)
    out[ok] = un[ok] / z[ok, None]
    return out, z


def hmm_filter(pi0, ys, P, B):
    pis = [np.asarray(pi0, dtype=float)]
    for y in ys:
        pis.append(hmm_filter_step(pis[-1], y, P, B))
    return np.array(pis)


# ---------------------------------------------------------------------------
# Kalman
# ---------------------------------------------------------------------------


def _inv(S, what="innovation covariance"):
    try:
        if np.linalg.cond(S) > 1e14:
            raise np.linalg.LinAlgError
        return np.linalg.inv(S)
    except np.linalg.LinAlgError:
        raise SingularMatrixError(f"{what} is singular") from None


def kalman_predict(belief, A, Q, u=None):
    from .model import GaussianBelief

    A = np.atleast_2d(A)
    mean = A @ belief.mean
    if u is not None:
        mean = mean + np.atleast_1d(u)
    return GaussianBelief(mean, A @ belief.cov @ A.T + np.atleast_2d(Q))


def kalman_update(belief, y, C, R):
    from .model import GaussianBelief

    C = np.atleast_2d(C)
    R = np.atleast_2d(R)
    S = C @ belief.cov @ C.T + R
    K = belief.cov @ C.T @ _inv(S)
    innov = np.atleast_1d(y) - C @ belief.mean
    cov = belief.cov - K @ C @ belief.cov
    # Joseph-free form; symmetrised and clamped by GaussianBelief.
    return GaussianBelief(belief.mean + K @ innov, cov)


def kalman_step(belief, y, A, C, Q, R, u=None):
    """Covariance-form predict + update; ``u`` is a known additive state input."""
    return kalman_update(kalman_predict(belief, A, Q, u), y, C, R)


def information_predict(belief, A, Q, u=None):
    """Information-form prediction that tolerates zero (or rank-deficient) precision.

    With invertible ``Q`` the Woodbury form is used with a pseudo-inverse, which
    gives the correct limit when the prior carries no information along some
    direction (including the case ``A = 0``). With ``Q = 0`` the transition
    must be invertible.
    """
    from .model import InformationBelief

    A = np.atleast_2d(A)
    Q = np.atleast_2d(Q)
    L, eta = belief.precision, belief.info
    if np.linalg.matrix_rank(Q) == Q.shape[0]:
        Qi = np.linalg.inv(Q)
        M = np.linalg.pinv(L + A.T @ Qi @ A, hermitian=True)
        prec = Qi - Qi @ A @ M @ A.T @ Qi
        info = Qi @ A @ M @ eta
    elif not np.any(Q):
        Ai = _inv(A, "state transition")
        prec = Ai.T @ L @ Ai
        info = Ai.T @ eta
    else:
        raise SingularMatrixError("information-form prediction needs Q invertible or Q = 0")
    prec = 0.5 * (prec + prec.T)
    if u is not None:
        info = info + prec @ np.atleast_1d(u)
    return InformationBelief(info, prec)


def information_update(belief, y, C, R):
    from .model import InformationBelief

    C = np.atleast_2d(C)
    Ri = _inv(np.atleast_2d(R), "observation noise covariance")
    return InformationBelief(
        belief.info + C.T @ Ri @ np.atleast_1d(y),
        belief.precision + C.T @ Ri @ C,
    )


def information_filter_step(belief, y, A, C, Q, R, u=None):
    return information_update(information_predict(belief, A, Q, u), y, C, R)
