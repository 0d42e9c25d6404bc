import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from inversefilter.errors import ConfigError, ValidationError
from inversefilter.model import (
    AdversaryPolicy,
    HMMModel,
    LinearGaussianModel,
    QuantizedPolicyChannel,
    UniformChannel,
    as_stochastic_matrix,
    make_rng,
    simulate_chain,
    stationary_distribution,
)


def _hmm(P, B=None, pi0=None):
    P = np.asarray(P, float)
    X = P.shape[0]
    B = np.full((X, 2), 0.5) if B is None else B
    pi0 = np.full(X, 1.0 / X) if pi0 is None else pi0
    return HMMModel(P, B, pi0, UniformChannel(2))


class TestValidation:
    def test_rejects_non_stochastic(self):
        with pytest.raises(ValidationError):
            as_stochastic_matrix([[0.5, 0.6], [0.5, 0.5]])

    def test_rejects_negative(self):
        with pytest.raises(ValidationError):
            as_stochastic_matrix([[1.2, -0.2], [0.5, 0.5]])

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigError):
            HMMModel(np.eye(2), np.full((3, 2), 0.5), [0.5, 0.5], UniformChannel(2))

    def test_policy_needs_increasing_g(self):
        with pytest.raises(ValidationError):
            AdversaryPolicy([1.0, 0.0], lambda s: s)

    def test_policy_rejects_decreasing_phi(self):
        with pytest.raises(ValidationError):
            AdversaryPolicy([0.0, 1.0], lambda s: 1.0 - s)

    def test_quantizer_policy_allowed(self):
        pol = AdversaryPolicy.quantizer([0.0, 1.0], [0.5], [0.0, 2.0])
        assert_allclose(pol(np.array([[0.9, 0.1], [0.2, 0.8]])), [0.0, 2.0])

    def test_linear_model_needs_pd_R(self):
        with pytest.raises(ValidationError):
            LinearGaussianModel(1.0, 1.0, 0.0, 0.0)


class TestSimulateHmm:
    def test_identity_freezes_state(self):
        rec = simulate_chain(_hmm(np.eye(3)), 5, seed=4)
        assert_array_equal(rec.x, np.full(6, rec.x[0]))

    def test_deterministic(self, two_state_hmm):
        r1 = simulate_chain(two_state_hmm, 50, seed=9)
        r2 = simulate_chain(two_state_hmm, 50, seed=9)
        for f in ("x", "y", "pi", "u", "a"):
            assert_array_equal(getattr(r1, f), getattr(r2, f))

    def test_stationary_occupancy(self):
        P = [[0.8, 0.2], [0.7, 0.3]]
        assert_allclose(stationary_distribution(P), [7 / 9, 2 / 9], atol=1e-12)
        rec = simulate_chain(_hmm(P), 10_000, seed=1)
        occ = np.bincount(rec.x, minlength=2) / rec.x.size
        assert np.all(np.abs(occ - [0.778, 0.222]) < 0.02)

    def test_beliefs_are_filter_outputs(self, two_state_hmm):
        from inversefilter.filters import hmm_filter

        rec = simulate_chain(two_state_hmm, 20, seed=2)
        assert_allclose(rec.pi, hmm_filter(two_state_hmm.pi0, rec.y, two_state_hmm.P, two_state_hmm.B))

    def test_csv_header(self, two_state_hmm, tmp_path):
        rec = simulate_chain(two_state_hmm, 3, seed=0)
        rec.to_csv(tmp_path / "t.csv")
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0] == "k,x,y,pi_0,pi_1,u,a"
        assert len(lines) == 5


class TestSimulateLinear:
    def test_deterministic(self):
        m = LinearGaussianModel(0.4, 1.0, 2.0, 1.0, Sigma0=2.0)
        r1, r2 = simulate_chain(m, 30, 5), simulate_chain(m, 30, 5)
        assert_array_equal(r1.x, r2.x)
        assert_array_equal(r1.a, r2.a)

    def test_noiseless_action_is_estimate(self):
        m = LinearGaussianModel(0.4, 1.0, 2.0, 1.0, sigma_eps2=0.0, Sigma0=2.0)
        rec = simulate_chain(m, 20, 3)
        assert_allclose(rec.a.ravel(), rec.pi[1:].ravel())


class TestRng:
    def test_streams_are_distinct(self):
        assert make_rng(1, 0).random() != make_rng(1, 1).random()

    def test_reproducible(self):
        assert make_rng(7, 2).random() == make_rng(7, 2).random()


def test_quantized_channel_likelihood_rows():
    ch = QuantizedPolicyChannel([0.0, 1.0], [0.5], [[0.9, 0.1], [0.2, 0.8]])
    G = ch.likelihood(np.array([[0.8, 0.2], [0.3, 0.7]]))
    assert_allclose(G, [[0.9, 0.1], [0.2, 0.8]])
