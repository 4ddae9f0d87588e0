import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from optionforge.errors import ContractViolation
from optionforge.options import (
    OptionPrior, Trajectory, prior_log_prob, reinforce_prior, sample_option,
)

logit_rows = st.lists(st.floats(-20, 20), min_size=1, max_size=12)


def test_uniform_sampling_frequencies():
    prior = OptionPrior.uniform(4, 3)
    rng = np.random.default_rng(1)
    draws = np.array([sample_option(prior, 0, rng) for _ in range(100_000)])
    freq = np.bincount(draws, minlength=4) / len(draws)
    assert np.all(np.abs(freq - 0.25) <= 0.01)


def test_saturated_learned_prior():
    logits = np.zeros((2, 3))
    logits[1, 2] = 60.0
    prior = OptionPrior.learned(3, 2, logits)
    rng = np.random.default_rng(0)
    assert all(sample_option(prior, 1, rng) == 2 for _ in range(1000))


def test_single_option():
    rng = np.random.default_rng(0)
    for prior in (OptionPrior.uniform(1, 2), OptionPrior.learned(1, 2)):
        assert {sample_option(prior, 0, rng) for _ in range(20)} == {0}
        assert prior_log_prob(prior, 0, 0) == 0.0


def test_log_prob_uniform_50():
    assert prior_log_prob(OptionPrior.uniform(50, 1), 0, 7) == pytest.approx(-3.912023005428146, abs=1e-12)


def test_log_prob_equal_logits():
    prior = OptionPrior.learned(6, 2, np.full((2, 6), 3.3))
    assert prior_log_prob(prior, 1, 4) == pytest.approx(-math.log(6), abs=1e-12)


def test_uniform_entropy_is_log_n():
    for n in (1, 2, 8, 50):
        assert abs(OptionPrior.uniform(n, 1).entropy(0) - math.log(n)) <= 1e-12


@given(logit_rows)
def test_learned_normalization(row):
    prior = OptionPrior.learned(len(row), 1, np.array([row]))
    assert abs(prior.probabilities(0).sum() - 1.0) <= 1e-12


class TestReinforcePrior:
    def test_positive_reward_increases(self):
        prior = OptionPrior.learned(4, 2, np.random.default_rng(0).normal(size=(2, 4)))
        before = prior.probabilities(1)[2]
        reinforce_prior(prior, 1, 2, 0.7, 0.1)
        assert prior.probabilities(1)[2] > before

    def test_zero_reward_unchanged(self):
        prior = OptionPrior.learned(4, 2, np.ones((2, 4)))
        before = prior.logits.copy()
        reinforce_prior(prior, 0, 1, 0.0, 0.5)
        np.testing.assert_array_equal(prior.logits, before)

    def test_two_option_step(self):
        # expected value from a finite-difference gradient of ln p applied by hand
        prior = OptionPrior.learned(2, 1)
        reinforce_prior(prior, 0, 0, 1.0, 0.1)
        assert prior.probabilities(0)[0] == pytest.approx(0.524979187479657, abs=1e-9)

    def test_uniform_rejected(self):
        with pytest.raises(ContractViolation):
            reinforce_prior(OptionPrior.uniform(3, 1), 0, 0, 1.0, 0.1)

    @settings(max_examples=200)
    @given(logit_rows, st.integers(0, 11), st.floats(-5, 5), st.floats(1e-3, 1.0))
    def test_sign_property(self, row, w, r, lr):
        w = w % len(row)
        prior = OptionPrior.learned(len(row), 1, np.array([row]))
        before = prior.probabilities(0)[w]
        reinforce_prior(prior, 0, w, r, lr)
        after = prior.probabilities(0)[w]
        assert abs(prior.probabilities(0).sum() - 1.0) <= 1e-12
        if r > 0:
            assert after >= before - 1e-15
        elif r < 0:
            assert after <= before + 1e-15


class TestTrajectory:
    def test_chain_invariants(self):
        t = Trajectory(0, 3, [(3, 1, 4), (4, 1, 5)])
        assert t.final_state == 5
        assert t.states == [3, 4, 5]
        t.validate(horizon=2)

    def test_broken_chain(self):
        with pytest.raises(ContractViolation):
            Trajectory(0, 3, [(3, 1, 4), (2, 1, 5)]).validate()

    def test_horizon(self):
        with pytest.raises(ContractViolation):
            Trajectory(0, 0, [(0, 0, 0)] * 3).validate(horizon=2)
