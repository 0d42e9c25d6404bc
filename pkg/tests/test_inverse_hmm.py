import numpy as np
import pytest
from numpy.testing import assert_allclose

from oracles import enumerate_inverse_hmm
from inversefilter.errors import CapacityError, ImpossibleActionError
from inversefilter.estimation import loglik_inverse_hmm
from inversefilter.inverse_hmm import (
    BeliefTree,
    conditional_mean,
    expand_level,
    inverse_hmm_step,
    run_inverse_hmm,
)
from inversefilter.model import (
    HMMModel,
    QuantizedPolicyChannel,
    SoftmaxChannel,
    UniformChannel,
    simulate_chain,
)


def random_model(rng, X=2, Y=2, A=2):
    P = rng.dirichlet(np.ones(X), size=X)
    B = rng.dirichlet(np.ones(Y), size=X)
    return HMMModel(P, B, rng.dirichlet(np.ones(X)), SoftmaxChannel(rng.normal(scale=2.0, size=(A, X))))


class TestExpansion:
    def test_cardinality(self):
        t = BeliefTree.root([0.5, 0.5], 2)
        t = expand_level(t, np.array([[0.7, 0.3], [0.2, 0.8]]), np.array([[0.8, 0.2], [0.3, 0.7]]))
        assert t.leaves.size == 2

    def test_three_labels_four_levels(self):
        P = np.full((3, 3), 1 / 3)
        B = np.array([[0.5, 0.3, 0.2], [0.2, 0.5, 0.3], [0.3, 0.2, 0.5]])
        t = BeliefTree.root(np.full(3, 1 / 3), 3)
        for _ in range(4):
            t = expand_level(t, P, B)
        assert t.leaves.size == 81

    def test_absorbing_perfect_chain(self):
        t = BeliefTree.root([1.0, 0.0], 2)
        for _ in range(3):
            t = expand_level(t, np.eye(2), np.eye(2))
            lev = t.leaves
            assert_allclose(lev.pi[lev.alive], np.tile([1.0, 0.0], (lev.alive.sum(), 1)))

    def test_depth_cap(self):
        t = BeliefTree.root([0.5, 0.5], 2, depth_cap=2)
        P = np.full((2, 2), 0.5)
        t = expand_level(expand_level(t, P, P), P, P)
        with pytest.raises(CapacityError):
            expand_level(t, P, P)


class TestUpdate:
    def test_perfect_sensor_picks_label(self):
        m = HMMModel([[0.6, 0.4], [0.3, 0.7]], np.eye(2), [0.5, 0.5], UniformChannel(2))
        t = BeliefTree.root(m.pi0, 2)
        t = inverse_hmm_step(t, 1, 0, m.P, m.B, m.channel)
        lev = t.leaves
        w = np.zeros(2)
        np.add.at(w, lev.edge_label, lev.weights[lev.edge_child])
        assert_allclose(w, [0.0, 1.0])

    def test_weights_normalised(self, rng):
        m = random_model(rng)
        rec = simulate_chain(m, 5, 1)
        t = BeliefTree.root(m.pi0, 2)
        for k in range(5):
            t = inverse_hmm_step(t, rec.x[k + 1], rec.a[k], m.P, m.B, m.channel)
            assert abs(t.leaves.weights.sum() - 1.0) < 1e-12

    def test_impossible_action(self):
        ch = QuantizedPolicyChannel([0.0, 1.0], [0.5], [[1.0, 0.0], [1.0, 0.0]])
        m = HMMModel([[0.7, 0.3], [0.2, 0.8]], [[0.8, 0.2], [0.3, 0.7]], [0.5, 0.5], ch)
        with pytest.raises(ImpossibleActionError):
            inverse_hmm_step(BeliefTree.root(m.pi0, 2), 0, 1, m.P, m.B, m.channel)


class TestConditionalMean:
    def test_single_node(self):
        assert_allclose(conditional_mean(BeliefTree.root([0.3, 0.7], 2)), [0.3, 0.7])

    def test_two_nodes(self):
        t = BeliefTree.forest(np.eye(2), [0.5, 0.5], 2)
        assert_allclose(conditional_mean(t), [0.5, 0.5])


class TestAgainstEnumeration:
    @pytest.mark.parametrize("seed", range(5))
    def test_posterior_and_likelihood(self, seed):
        rng = np.random.default_rng(seed)
        m = random_model(rng)
        rec = simulate_chain(m, 6, seed)
        _, means = run_inverse_hmm(m, rec.x, rec.a)
        mean, lik = enumerate_inverse_hmm(m, rec.x, rec.a)
        assert 0.5 * np.abs(means[-1] - mean).sum() < 1e-10
        assert abs(loglik_inverse_hmm(m, rec.x, rec.a) - np.log(lik)) < 1e-10

    def test_three_states(self):
        rng = np.random.default_rng(42)
        m = random_model(rng, X=3, Y=3, A=2)
        rec = simulate_chain(m, 5, 3)
        _, means = run_inverse_hmm(m, rec.x, rec.a)
        mean, _ = enumerate_inverse_hmm(m, rec.x, rec.a)
        assert_allclose(means[-1], mean, atol=1e-10)


class TestMerging:
    def test_merge_keeps_mean(self, rng):
        # identity transitions produce many coincident beliefs
        m = HMMModel(np.eye(2), [[0.7, 0.3], [0.3, 0.7]], [0.5, 0.5], SoftmaxChannel([[2.0, -1.0], [-1.0, 2.0]]))
        rec = simulate_chain(m, 8, 0)
        t0, m0 = run_inverse_hmm(m, rec.x, rec.a)
        t1, m1 = run_inverse_hmm(m, rec.x, rec.a, merge_tol=1e-12)
        assert t1.leaves.size < t0.leaves.size
        assert np.max(np.abs(m0 - m1)) < 1e-10

    def test_tree_csv(self, two_state_hmm, tmp_path):
        rec = simulate_chain(two_state_hmm, 2, 0)
        t, _ = run_inverse_hmm(two_state_hmm, rec.x, rec.a)
        t.to_csv(tmp_path / "tree.csv")
        lines = (tmp_path / "tree.csv").read_text().splitlines()
        assert lines[0] == "level,node_id,parent_id,y,weight,pi_0,pi_1"
        assert len(lines) == 1 + 1 + 2 + 4
