import numpy as np
import pytest
from numpy.testing import assert_allclose

from inversefilter import filters
from inversefilter.inverse_kalman import (
    InverseKalmanState,
    derive_inverse_params,
    inverse_kalman_step,
    localization_covariance_recursion,
    localization_covariance_track,
    run_inverse_kalman,
)
from inversefilter.model import LinearGaussianModel, simulate_chain


def riccati_gain(A, Q, C, R):
    S = Q
    for _ in range(10_000):
        Sp = A * A * S + Q
        S = Sp - Sp * Sp * C * C / (C * C * Sp + R)
    return S * C / R


class TestParameters:
    def test_localization_gains(self):
        m = LinearGaussianModel(1.0, 1.0, 0.0, 1.0)
        p = derive_inverse_params(m, 20)
        k = np.arange(1, 21)
        assert_allclose(p.psi[:, 0, 0], 1.0 / k, atol=1e-12)
        assert_allclose(p.Qbar[:, 0, 0], 1.0 / k**2, atol=1e-12)
        assert_allclose(p.Sigma[1:, 0, 0], 1.0 / k, atol=1e-12)

    def test_blind_adversary(self):
        A = np.array([[0.9, 0.1], [0.0, 0.5]])
        m = LinearGaussianModel(A, np.zeros((1, 2)), np.eye(2), 1.0, Sigma0=np.eye(2))
        p = derive_inverse_params(m, 5)
        assert_allclose(p.Fbar, 0.0)
        assert_allclose(p.Abar, np.broadcast_to(A, p.Abar.shape))

    def test_gain_converges(self):
        m = LinearGaussianModel(0.4, 1.0, 2.0, 1.0, Sigma0=1.0)
        p = derive_inverse_params(m, 60)
        assert abs(p.psi[49, 0, 0] - riccati_gain(0.4, 2.0, 1.0, 1.0)) < 1e-8


class TestFilter:
    def test_noiseless_actions(self):
        m = LinearGaussianModel(0.4, 1.0, 2.0, 1.0, sigma_eps2=1e-14, Sigma0=1.0)
        rec = simulate_chain(m, 30, 2)
        run = run_inverse_kalman(m, rec)
        assert_allclose(run.xhathat[1:, 0], np.ravel(rec.a), atol=1e-6)

    def test_tracks_true_estimate_without_noise(self):
        m = LinearGaussianModel(0.4, 1.0, 2.0, 1.0, sigma_eps2=1.0, Sigma0=1.0)
        rec = simulate_chain(m, 10, 3)
        run = run_inverse_kalman(m, rec)
        assert run.xhathat.shape == (11, 1)
        assert np.all(run.Sigmabar[1:, 0, 0] > 0)

    def test_localization_first_step(self):
        m = LinearGaussianModel(1.0, 1.0, 0.0, 1.0, sigma_eps2=1.0)
        rec = simulate_chain(m, 5, 0)
        run = run_inverse_kalman(m, rec, Sigmabar0=None)
        assert_allclose(run.Sigmabar[1, 0, 0], 0.5)
        assert_allclose(run.Sigma_adversary[1, 0, 0], 1.0)
        track = localization_covariance_track(5, lambda k: 1.0)
        assert_allclose(run.Sigmabar[1:, 0, 0], track, atol=1e-12)

    def test_zero_innovations(self):
        m = LinearGaussianModel(0.4, 1.0, 2.0, 1.0, sigma_eps2=0.5, Sigma0=1.0)
        rec = simulate_chain(m, 15, 1)
        p = derive_inverse_params(m, 15)
        st = InverseKalmanState.exact(m.xhat0)
        acts = []
        for k in range(15):
            Ab, Fb, _, Cb = p.Abar[k], p.Fbar[k], p.Qbar[k], p.Cbar[k + 1]
            x_next = np.atleast_1d(rec.x[k + 1])
            a = Cb @ (Ab @ st.belief.mean + Fb @ x_next)
            st, e, _ = inverse_kalman_step(st, a, x_next, p, k)
            assert_allclose(e, 0.0, atol=1e-12)
            acts.append(a)
        assert np.all(np.isfinite(acts))

    def test_csv(self, tmp_path):
        m = LinearGaussianModel(0.4, 1.0, 2.0, 1.0, Sigma0=1.0)
        run = run_inverse_kalman(m, simulate_chain(m, 4, 0))
        run.to_csv(tmp_path / "ik.csv")
        lines = (tmp_path / "ik.csv").read_text().splitlines()
        assert lines[0] == "k,xhat_adversary,xhathat,Sigma_adversary,Sigmabar"
        assert len(lines) == 6


class TestCovarianceRecursion:
    @pytest.mark.parametrize("s0", [0.0, 1.0, 7.5, np.inf])
    def test_first_step(self, s0):
        assert localization_covariance_recursion(s0, 0, 1.0) == 0.5

    @pytest.mark.parametrize("k", [1, 5, 40])
    def test_no_action_information(self, k):
        assert_allclose(localization_covariance_recursion(1.0 / k, k, 0.0), 1.0 / (k + 1))

    def test_ordering_short(self):
        k = np.arange(1, 201)
        one = localization_covariance_track(200, lambda j: 1.0)
        adv = localization_covariance_track(200, lambda j: 1.0 / j)
        assert np.all(one[1:] < adv[1:]) and np.all(adv < 1.0 / k)


class TestCalibration:
    def test_monte_carlo_consistency(self):
        m = LinearGaussianModel(0.4, 1.0, 2.0, 1.0, sigma_eps2=1.0, Sigma0=2.0 / 0.84)
        p = derive_inverse_params(m, 200)
        err = np.empty((500, 201))
        Sbar = None
        for r in range(500):
            rec = simulate_chain(m, 200, 1000 + r)
            run = run_inverse_kalman(m, rec, params=p)
            err[r] = (run.xhathat[:, 0] - np.ravel(rec.pi)) ** 2
            Sbar = run.Sigmabar[:, 0, 0]
        for k in (10, 50, 200):
            assert abs(err[:, k].mean() / Sbar[k] - 1.0) < 0.15
        # time-averaged over the first 100 runs: within 3 standard errors
        tav = err[:100, 1:].mean(axis=1)
        se = tav.std(ddof=1) / np.sqrt(tav.size)
        assert abs(tav.mean() - Sbar[1:].mean()) < 3 * se
