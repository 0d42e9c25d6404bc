import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from inversefilter import probe
from inversefilter.errors import ConfigError, ValidationError
from inversefilter.experiments import _tp2_sensor
from inversefilter.model import AdversaryPolicy

B2 = np.array([[0.8, 0.2], [0.3, 0.7]])
PI0 = np.array([0.5, 0.5])

# Horn matrix: copositive, neither PSD nor entrywise non-negative, minimum exactly 0
HORN = np.array([
    [1, -1, 1, 1, -1],
    [-1, 1, -1, 1, 1],
    [1, -1, 1, -1, 1],
    [1, 1, -1, 1, -1],
    [-1, 1, 1, -1, 1],
], dtype=float)


class TestOrderings:
    @pytest.mark.parametrize("P, expect", [
        ([[0.8, 0.2], [0.7, 0.3]], True),
        ([[0.2, 0.8], [0.1, 0.9]], True),
        ([[0.8, 0.2], [0.3, 0.7]], True),
        (np.eye(3), True),
        ([[0.2, 0.8], [0.9, 0.1]], False),
    ])
    def test_tp2(self, P, expect):
        assert probe.is_tp2(np.array(P)) is expect

    def test_mlr(self):
        a = np.array([0.2, 0.3, 0.5])
        assert probe.mlr_dominates(a, a)
        assert probe.mlr_dominates([0, 0, 1], [1, 0, 0])
        assert probe.mlr_dominates([0.2, 0.8], [0.5, 0.5])
        assert not probe.mlr_dominates([0.5, 0.5], [0.2, 0.8])

    def test_mlr_implies_fosd_examples(self):
        assert probe.first_order_dominates([0.2, 0.8], [0.5, 0.5])


class TestCopositiveDominance:
    def test_matrix_tp2_pair(self):
        (L,) = probe.dominance_matrices(*probe.tp2_example_pair())
        assert_allclose(L, np.full((2, 2), 0.6), atol=1e-15)

    def test_tp2_pair(self):
        P1, P2 = probe.tp2_example_pair()
        assert probe.copositive_dominates(P1, P2)[0]
        assert not probe.copositive_dominates(P2, P1)[0]

    def test_absorbing_pair(self):
        P1, P2 = probe.absorbing_example_pair(0.3, 0.7)
        assert probe.copositive_dominates(P1, P2)[0]
        assert not probe.copositive_dominates(P2, P1)[0]

    @pytest.mark.parametrize("P", [probe.tp2_example_pair()[0], probe.stopping_matrix([0.2, 0.3])])
    def test_reflexive(self, P):
        assert probe.copositive_dominates(P, P)[0]

    def test_stopping_pair(self):
        lo, hi = probe.stopping_matrix([0.2, 0.3]), probe.stopping_matrix([0.45, 0.48])
        assert probe.is_tp2(lo) and probe.is_tp2(hi)
        assert probe.copositive_dominates(lo, hi)[0]
        assert not probe.copositive_dominates(hi, lo)[0]

    def test_hadeler_three_state(self):
        assert probe.check_copositive(-np.eye(3)).verdict == "not-copositive"
        L = np.array([[1.0, -0.5, 0.2], [-0.5, 1.0, -0.5], [0.2, -0.5, 1.0]])
        assert probe.check_copositive(L).verdict == "copositive"

    def test_horn_is_inconclusive_on_grid(self):
        c = probe.check_copositive(HORN)
        assert c.verdict == "inconclusive"
        assert abs(c.min_value) < 1e-9
        assert c.method.startswith("grid-")

    def test_four_state_negative(self):
        L = np.eye(4) - 0.6 * (np.ones((4, 4)) - np.eye(4))
        c = probe.check_copositive(L)
        assert c.verdict == "not-copositive"
        assert c.witness @ L @ c.witness < 0
        assert_allclose(c.witness.sum(), 1.0, atol=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            probe.dominance_matrices(np.eye(2), np.eye(3))


class TestSpherical:
    def test_corners(self):
        assert_allclose(probe.spherical_to_stochastic(np.zeros((2, 1))), [[1, 0], [1, 0]], atol=1e-15)
        assert_allclose(probe.spherical_to_stochastic(np.full((2, 1), math.pi / 4)), np.full((2, 2), 0.5))

    @pytest.mark.parametrize("X", [2, 3, 4])
    def test_roundtrip(self, X):
        rng = np.random.default_rng(X)
        P = rng.dirichlet(np.ones(X), size=X)
        assert_allclose(probe.spherical_to_stochastic(probe.stochastic_to_spherical(P)), P, atol=1e-12)


class TestSnr:
    def test_constant_policy(self):
        pol = AdversaryPolicy.constant([0.0, 1.0], 1.5)
        est = probe.empirical_snr(np.array([[0.9, 0.1], [0.2, 0.8]]), B2, PI0, pol, 0.5, 30, 10, seed=0)
        assert_allclose(est.value, 1.5**2 / 0.5, rtol=1e-12)

    def test_rejects_bad_noise(self):
        with pytest.raises(ValidationError):
            probe.empirical_snr(np.eye(2), B2, PI0, AdversaryPolicy.constant([0.0, 1.0], 1.0), 0.0, 5, 2, 0)

    @pytest.mark.parametrize("pair", ["tp2", "stopping"])
    def test_ordering(self, pair):
        if pair == "tp2":
            (P1, P2), B, p0, g = probe.tp2_example_pair(), B2, PI0, [0.0, 1.0]
        else:
            P1, P2 = probe.stopping_matrix([0.2, 0.3]), probe.stopping_matrix([0.45, 0.48])
            B, p0, g = _tp2_sensor(3), np.full(3, 1 / 3), [0.0, 1.0, 2.0]
        pol = AdversaryPolicy(g, lambda s: s)
        lo = probe.empirical_snr(P1, B, p0, pol, 1.0, 50, 400, seed=0, burn_in=0)
        hi = probe.empirical_snr(P2, B, p0, pol, 1.0, 50, 400, seed=0, burn_in=0)
        assert hi.value > lo.value - 2 * math.hypot(lo.se, hi.se)


class TestSamplewise:
    def test_identical(self):
        P = np.array([[0.7, 0.3], [0.4, 0.6]])
        assert probe.samplewise_mlr_ordering_check(P, P, B2, PI0, 30, range(10)) == 0.0

    def test_tp2_pair(self):
        P1, P2 = probe.tp2_example_pair()
        assert probe.samplewise_mlr_ordering_check(P1, P2, B2, PI0, 50, range(100)) == 0.0

    def test_stopping(self):
        P1, P2 = probe.stopping_matrix([0.2, 0.3]), probe.stopping_matrix([0.45, 0.48])
        assert probe.samplewise_mlr_ordering_check(P1, P2, _tp2_sensor(3), np.full(3, 1 / 3), 50, range(100)) == 0.0

    def test_fraction_in_unit_interval(self):
        rng = np.random.default_rng(1)
        P1, P2 = rng.dirichlet([1, 1], 2), rng.dirichlet([1, 1], 2)
        f = probe.samplewise_mlr_ordering_check(P1, P2, B2, PI0, 20, range(5))
        assert 0.0 <= f <= 1.0


THETA_STAR = np.array([1.0, -0.5])


def quadratic(theta, seed):
    return float(np.sum((np.asarray(theta) - THETA_STAR) ** 2))


class TestSpsa:
    def test_config_validation(self):
        for bad in ({"gamma": 0.3}, {"zeta": 0.5}, {"delta": 0.0}, {"replicates": 1}):
            with pytest.raises(ConfigError):
                probe.SpsaConfig(**bad)

    def test_schedules(self):
        c = probe.SpsaConfig()
        assert_allclose(c.perturbation(0), 0.1)
        assert_allclose(c.step(0), 0.1 / 11**0.7)

    def test_two_evaluations_per_iteration(self):
        _, tr = probe.spsa_optimize(probe.SpsaConfig(iterations=37), quadratic, [0.0, 0.0])
        assert tr.evaluations == 74
        assert len(tr.thetas) == 38 and len(tr.values) == 37

    def test_non_finite_skips(self):
        _, tr = probe.spsa_optimize(probe.SpsaConfig(iterations=5), lambda t, s: float("nan"), [0.0])
        assert tr.skipped == 5 and tr.evaluations == 10
        assert_allclose(tr.thetas[-1], [0.0])

    def test_gradient_exact_expectation(self):
        theta = np.zeros(2)
        dirs = np.array([[a, b] for a in (-1.0, 1.0) for b in (-1.0, 1.0)])
        mean = np.mean([probe.spsa_gradient(quadratic, theta, 0.1, d, 0)[0] for d in dirs], axis=0)
        assert_allclose(mean, 2 * (theta - THETA_STAR), atol=1e-12)

    def test_quadratic_convergence(self):
        cfg = probe.SpsaConfig(eps=0.1, zeta=0.7, iterations=500)
        theta, _ = probe.spsa_optimize(cfg, quadratic, [0.0, 0.0], seed=0)
        assert np.linalg.norm(theta - THETA_STAR) < 0.05

    def test_moving_average(self):
        assert_allclose(probe.moving_average(np.arange(25.0), 20), np.arange(9.5, 15.0, 1.0))

    def test_probe_objective_finite(self):
        obj = probe.ProbeObjective(horizon=40, replicates=3, particles=32, grid=np.linspace(0.55, 0.99, 8))
        v = obj(probe.STICKY_START, 0)
        assert np.isfinite(v) and v >= 0
        assert v == obj(probe.STICKY_START, 0)
