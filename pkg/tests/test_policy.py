import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from optionforge.errors import ContractViolation, NumericalFailure
from optionforge.options import Trajectory, log_softmax
from optionforge.policy import (
    IntraOptionPolicy, act, act_greedy, entropy, entropy_grad, entropy_of_logits,
    log_prob_grad, returns_to_go, update_reinforce,
)


def central_diff(f, z, h=1e-6):
    g = np.zeros_like(z)
    for i in range(len(z)):
        e = np.zeros_like(z)
        e[i] = h
        g[i] = (f(z + e) - f(z - e)) / (2 * h)
    return g


def rel_err(a, b, floor=1e-8):
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def test_uniform_act_frequencies():
    p = IntraOptionPolicy.zeros(1, 1, 4)
    rng = np.random.default_rng(2)
    draws = np.array([act(p, 0, 0, rng) for _ in range(100_000)])
    assert np.all(np.abs(np.bincount(draws, minlength=4) / 1e5 - 0.25) <= 0.01)


def test_saturated_act():
    p = IntraOptionPolicy.zeros(2, 3, 4)
    p.logits[1, 2, 3] = 80.0
    rng = np.random.default_rng(0)
    assert {act(p, 2, 1, rng) for _ in range(500)} == {3}


def test_greedy_tie_break_lowest_index():
    p = IntraOptionPolicy.zeros(1, 1, 5)
    assert act_greedy(p, 0, 0) == 0
    p.logits[0, 0] = [0.0, 2.0, 1.0, 2.0, -1.0]
    assert act_greedy(p, 0, 0) == 1


class TestEntropy:
    def test_uniform(self):
        assert entropy(IntraOptionPolicy.zeros(1, 1, 4), 0, 0) == pytest.approx(math.log(4), abs=1e-12)

    def test_near_deterministic(self):
        p = IntraOptionPolicy.zeros(1, 1, 4)
        p.logits[0, 0, 2] = 50.0
        assert entropy(p, 0, 0) < 1e-15

    @given(st.lists(st.floats(-30, 30), min_size=1, max_size=10))
    def test_bounds(self, row):
        h = entropy_of_logits(np.array(row))
        assert -1e-12 <= h <= math.log(len(row)) + 1e-12


def test_returns_to_go_brute_force():
    rng = np.random.default_rng(0)
    r = rng.normal(size=17)
    gamma = 0.93
    brute = [sum(gamma ** (k - t) * r[k] for k in range(t, len(r))) for t in range(len(r))]
    np.testing.assert_allclose(returns_to_go(r, gamma), brute, rtol=1e-12, atol=1e-12)


class TestGradients:
    @pytest.mark.parametrize("seed", range(20))
    def test_log_prob_grad(self, seed):
        rng = np.random.default_rng(seed)
        z = rng.normal(0, 2, size=rng.integers(2, 7))
        a = int(rng.integers(len(z)))
        num = central_diff(lambda v: log_softmax(v)[a], z)
        assert rel_err(log_prob_grad(z, a), num) <= 1e-4

    @pytest.mark.parametrize("seed", range(20))
    def test_entropy_grad(self, seed):
        rng = np.random.default_rng(100 + seed)
        z = rng.normal(0, 2, size=rng.integers(2, 7))
        num = central_diff(entropy_of_logits, z)
        assert rel_err(entropy_grad(z), num) <= 1e-4


class TestUpdate:
    def test_zero_advantage_no_entropy(self):
        p = IntraOptionPolicy.zeros(2, 3, 2)
        before = p.logits.copy()
        update_reinforce(p, Trajectory(1, 0, [(0, 1, 1), (1, 0, 0)]), [0.0, 0.0], 0.5)
        np.testing.assert_array_equal(p.logits, before)

    def test_positive_advantage(self):
        p = IntraOptionPolicy.zeros(1, 2, 3)
        before = p.probs(0, 0)[2]
        update_reinforce(p, Trajectory(0, 0, [(0, 2, 1)]), [1.5], 0.1)
        assert p.probs(0, 0)[2] > before
        assert abs(p.probs(0, 0).sum() - 1.0) <= 1e-12

    def test_only_the_trajectory_option_moves(self):
        p = IntraOptionPolicy.zeros(3, 2, 2)
        update_reinforce(p, Trajectory(1, 0, [(0, 1, 1)]), [2.0], 0.1)
        assert np.all(p.logits[0] == 0) and np.all(p.logits[2] == 0)

    def test_baseline_tracks_returns(self):
        p = IntraOptionPolicy.zeros(1, 1, 2, baseline_decay=0.5)
        traj = Trajectory(0, 0, [(0, 0, 0)])
        for _ in range(40):
            update_reinforce(p, traj, [3.0], 0.01)
        assert p.baseline[0, 0] == pytest.approx(3.0, abs=1e-9)

    def test_entropy_bonus_flattens(self):
        p = IntraOptionPolicy.zeros(1, 1, 3, entropy_coefficient=1.0)
        p.logits[0, 0] = [2.0, -1.0, 0.5]
        traj = Trajectory(0, 0, [(0, 0, 0)])
        hs = []
        for _ in range(300):
            # zero advantage: the return always equals the current baseline
            update_reinforce(p, traj, [p.baseline[0, 0]], 0.2)
            hs.append(entropy(p, 0, 0))
        assert all(b >= a - 1e-12 for a, b in zip(hs, hs[1:]))
        assert hs[-1] == pytest.approx(math.log(3), abs=1e-6)

    def test_length_mismatch(self):
        with pytest.raises(ContractViolation):
            update_reinforce(IntraOptionPolicy.zeros(1, 1, 2), Trajectory(0, 0, [(0, 0, 0)]), [1, 2], 0.1)

    def test_non_finite(self):
        with pytest.raises(NumericalFailure):
            update_reinforce(IntraOptionPolicy.zeros(1, 1, 2), Trajectory(0, 0, [(0, 0, 0)]), [np.nan], 0.1)

    @settings(max_examples=100)
    @given(st.integers(0, 10_000))
    def test_normalized_after_update(self, seed):
        rng = np.random.default_rng(seed)
        p = IntraOptionPolicy(rng.normal(size=(2, 4, 3)), entropy_coefficient=0.1)
        steps, s = [], 0
        for _ in range(6):
            t = int(rng.integers(4))
            steps.append((s, int(rng.integers(3)), t))
            s = t
        update_reinforce(p, Trajectory(1, 0, steps), rng.normal(0, 5, size=6), 0.3)
        sums = np.exp(log_softmax(p.logits)).sum(axis=2)
        assert np.max(np.abs(sums - 1.0)) <= 1e-12
