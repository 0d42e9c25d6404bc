"""Frozen outputs for fixed seeds; any change in numerics or RNG wiring shows up here."""

import numpy as np
from numpy.testing import assert_allclose

from inversefilter import localization
from inversefilter.estimation import ScalarSetup, crb_linear_gaussian, loglik_inverse_hmm
from inversefilter.experiments import HMM_MODEL, hmm_from_block
from inversefilter.inverse_hmm import run_inverse_hmm
from inversefilter.model import simulate_chain
from inversefilter.particle import run_particle_filter


def test_game_track():
    _, s = localization.game_precision_track(10, 1.0)
    assert_allclose(s, [6 / 7, 0.448376023237391, 0.3063382104184849, 0.23333473291455853, 0.18866863257139221],
                    rtol=1e-12)


def test_game_mse():
    assert_allclose(localization.game_mse(1.0, 100, range(50)), 0.020556033280342067, rtol=1e-10)


def test_crb_small():
    r = crb_linear_gaussian(2.0, 100, 0, ScalarSetup(horizon=200))
    assert_allclose([r.crb_classic, r.crb_inverse], [0.011528216194746792, 0.23353145437603803], rtol=1e-8)


class TestHmmRecord:
    def setup_method(self):
        self.m = hmm_from_block(HMM_MODEL)
        self.rec = simulate_chain(self.m, 8, 3)

    def test_record(self):
        assert self.rec.x.tolist() == [0, 1, 1, 1, 1, 1, 1, 1, 0]
        assert self.rec.a.tolist() == [0, 1, 1, 0, 1, 1, 0, 0]

    def test_exact_and_likelihood(self):
        assert_allclose(run_inverse_hmm(self.m, self.rec.x, self.rec.a)[1][-1], [0.6088468967538389, 0.391153103246161],
                        rtol=1e-12)
        assert_allclose(loglik_inverse_hmm(self.m, self.rec.x, self.rec.a), -10.121879370997945, rtol=1e-12)

    def test_particle(self):
        pr = run_particle_filter(self.m, self.rec.x, self.rec.a, 200, seed=5)
        assert_allclose(pr.means[-1], [0.6092896152917533, 0.39071038470824687], rtol=1e-10)
