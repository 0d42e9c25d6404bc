import numpy as np
import pytest
from numpy.testing import assert_allclose

from oracles import enumerate_social
from inversefilter.inverse_hmm import conditional_mean
from inversefilter.social import (
    SocialModel,
    action_likelihoods,
    inverse_social_step,
    myopic_action,
    partition_likelihood_regions,
    private_belief,
    simulate_social,
    social_learning_step,
    social_tree,
)

P = np.array([[0.8, 0.2], [0.7, 0.3]])
B = np.array([[0.9, 0.1], [0.2, 0.8]])
COSTS = np.array([[0.0, 1.0], [1.0, 0.0]])  # column u is c_u


def model(P=np.eye(2), B=B, costs=COSTS, G=np.array([[0.9, 0.1], [0.15, 0.85]]), pi0=(0.5, 0.5)):
    return SocialModel(np.asarray(P, float), np.asarray(B, float), np.asarray(costs, float),
                       np.asarray(G, float), np.asarray(pi0, float))


class TestPrivateBelief:
    def test_hand_example(self):
        assert_allclose(private_belief([0.5, 0.5], 1, P, B), [0.075 / 0.275, 0.2 / 0.275])
        assert_allclose(private_belief([0.5, 0.5], 1, P, B), [0.2727, 0.7273], atol=1e-4)

    def test_uninformative(self):
        assert_allclose(private_belief([0.4, 0.6], 0, P, np.full((2, 2), 0.5)), np.array([0.4, 0.6]) @ P)

    def test_perfect(self):
        assert_allclose(private_belief([0.5, 0.5], 1, P, np.eye(2)), [0.0, 1.0])


class TestMyopicAction:
    def test_single_action(self):
        assert myopic_action([0.3, 0.7], [[1.0], [2.0]]) == 0

    def test_hand_example(self):
        assert myopic_action([0.9, 0.1], COSTS) == 0

    def test_tie_break(self):
        assert myopic_action([0.4, 0.6], [[1.0, 1.0], [2.0, 2.0]]) == 0


class TestPublicUpdate:
    def test_single_action_is_prediction(self):
        m = model(P=P, costs=[[1.0], [2.0]], G=[[1.0]])
        assert_allclose(social_learning_step([0.4, 0.6], 0, m), np.array([0.4, 0.6]) @ P)

    def test_cascade_is_prediction(self):
        m = model(P=[[0.95, 0.05], [0.05, 0.95]])
        herd = [r for r in partition_likelihood_regions(m) if np.any(np.all(r.R == 1.0, axis=1))]
        assert herd
        r = herd[0]
        p = 0.5 * (r.lo + r.hi)
        pi = np.array([1 - p, p])
        u = int(np.argmax(np.all(r.R == 1.0, axis=1)))
        assert_allclose(social_learning_step(pi, u, m), pi @ m.P)

    @pytest.mark.parametrize("seed", range(5))
    def test_direct_summation(self, seed):
        rng = np.random.default_rng(seed)
        m = model(P=rng.dirichlet([1, 1], 2), B=rng.dirichlet([1, 1], 2), costs=rng.uniform(size=(2, 2)))
        pi = rng.dirichlet([1, 1])
        for u in range(2):
            R = np.zeros(2)
            for y in range(2):
                eta = private_belief(pi, y, m.P, m.B)
                if myopic_action(eta, m.costs) == u:
                    R += m.B[:, y]
            un = R * (pi @ m.P)
            if un.sum() > 0:
                assert_allclose(social_learning_step(pi, u, m), un / un.sum(), atol=1e-12)


class TestRegions:
    def test_single_action_one_region(self):
        reg = partition_likelihood_regions(model(costs=[[1.0], [2.0]], G=[[1.0]]))
        assert len(reg) == 1 and reg[0].lo == 0.0 and reg[0].hi == 1.0

    def test_two_state_breakpoints_match_grid(self):
        m = model()
        reg = partition_likelihood_regions(m)
        p = (np.arange(10_000) + 0.5) / 10_000
        R = action_likelihoods(np.column_stack([1 - p, p]), m)
        for r in reg:
            inside = (p >= r.lo) & (p < r.hi)
            assert np.all(R[inside] == r.R)
        # breakpoints where c_1' B_y pi = c_2' B_y pi for each y
        assert_allclose(sorted({r.lo for r in reg} - {0.0}), [1 / 9, 9 / 11])

    def test_identical_costs(self):
        reg = partition_likelihood_regions(model(costs=[[1.0, 1.0], [0.0, 0.0]]))
        assert len(reg) == 1
        assert_allclose(reg[0].R[1], 0.0)


class TestInverseSocial:
    @pytest.mark.parametrize("seed", range(4))
    def test_enumeration(self, seed):
        rng = np.random.default_rng(100 + seed)
        m = model(P=rng.dirichlet([3, 3], 2), B=rng.dirichlet([1, 1], 2), costs=rng.uniform(size=(2, 2)),
                  G=rng.dirichlet([2, 2], 2))
        rec = simulate_social(m, 6, seed)
        t = social_tree(m)
        for k in range(6):
            t = inverse_social_step(t, rec.x[k + 1], rec.a[k], m)
        mean, _ = enumerate_social(m, rec.x, rec.a)
        assert 0.5 * np.abs(conditional_mean(t) - mean).sum() < 1e-10

    def test_single_action_path(self):
        m = model(P=P, costs=[[1.0], [2.0]], G=[[1.0]])
        t = social_tree(m)
        pi = m.pi0
        for k in range(4):
            t = inverse_social_step(t, 0, 0, m)
            pi = pi @ P
            assert t.leaves.size == 1
            assert_allclose(conditional_mean(t), pi)

    def test_noiseless_actions_point_mass(self):
        m = model(P=[[0.9, 0.1], [0.2, 0.8]], G=np.eye(2))
        rec = simulate_social(m, 5, 1)
        t = social_tree(m)
        for k in range(5):
            t = inverse_social_step(t, rec.x[k + 1], rec.a[k], m)
        assert_allclose(conditional_mean(t), rec.pi[-1], atol=1e-12)
        assert np.isclose(t.leaves.weights.max(), 1.0)
