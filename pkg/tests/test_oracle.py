import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from optionforge.env import CHAIN_LEFT, CHAIN_RIGHT, EnvSpec, make_chain, make_four_rooms
from optionforge.errors import ContractViolation
from optionforge.options import OptionPrior, Trajectory
from optionforge.oracle import (
    JointDistribution, blahut_arimoto, empirical_mi, exact_final_state_distribution, exact_joint,
    exact_mi, mi_decompositions, occupancy_metrics, optimal_prior, random_policy_room_fraction,
)
from optionforge.policy import IntraOptionPolicy


def random_policy(n_options, env, rng, scale=1.5):
    return IntraOptionPolicy(rng.normal(0, scale, size=(n_options, env.n_states, env.n_actions)))


def brute_force_final(env, policy, w, s0, horizon):
    """Sum over every (a_1, s_1, ..., a_H, s_H) path."""
    out = np.zeros(env.n_states)
    S, A = env.n_states, env.n_actions
    for path in itertools.product(range(A), range(S), repeat=horizon):
        prob, s = 1.0, s0
        for k in range(horizon):
            a, t = path[2 * k], path[2 * k + 1]
            prob *= policy.probs(s, w)[a] * env.transition[s, a, t]
            s = t
        out[s] += prob
    return out


class TestFinalStateDistribution:
    def test_deterministic_point_mass(self):
        env = make_four_rooms(5)
        p = IntraOptionPolicy.zeros(1, env.n_states, 4)
        p.logits[0, :, 3] = 100.0  # always right
        d = exact_final_state_distribution(env, p, 0, 5, 3)
        assert d[6] == pytest.approx(1.0, abs=1e-12)  # row 1 hits the wall at column 2

    def test_uniform_two_chain(self):
        env = make_chain(2)
        d = exact_final_state_distribution(env, IntraOptionPolicy.zeros(1, 2, 2), 0, 0, 1)
        np.testing.assert_allclose(d, [0.5, 0.5], atol=1e-15)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_path_enumeration(self, seed):
        env = make_chain(3, 0.1)
        rng = np.random.default_rng(seed)
        p = random_policy(2, env, rng)
        for w in range(2):
            for s0 in range(3):
                exact = exact_final_state_distribution(env, p, w, s0, 2)
                assert np.max(np.abs(exact - brute_force_final(env, p, w, s0, 2))) <= 1e-12
                assert abs(exact.sum() - 1.0) <= 1e-10

    def test_terminal_absorbs(self):
        P = np.zeros((3, 1, 3))
        P[0, 0, 1] = 1.0
        P[1, 0, 2] = 1.0
        P[2, 0, 0] = 1.0
        env = EnvSpec("ring", 3, 1, P, 0, np.zeros((3, 1)), terminal_states={1})
        d = exact_final_state_distribution(env, IntraOptionPolicy.zeros(1, 3, 1), 0, 0, 5)
        np.testing.assert_allclose(d, [0, 1, 0])

    def test_guards(self):
        env = make_chain(2)
        with pytest.raises(ContractViolation):
            exact_final_state_distribution(env, IntraOptionPolicy.zeros(1, 2, 2), 0, 0, 201)


class TestExactMi:
    def test_shared_policy_is_zero(self):
        env = make_chain(5, 0.2)
        rng = np.random.default_rng(0)
        row = rng.normal(size=(1, 5, 2))
        p = IntraOptionPolicy(np.repeat(row, 3, axis=0))
        assert abs(exact_mi(env, p, OptionPrior.uniform(3, 5), 2, 4)) <= 1e-12

    def test_perfect_channel(self):
        env = make_chain(2)
        p = IntraOptionPolicy.zeros(2, 2, 2)
        p.logits[0, :, CHAIN_LEFT] = 100.0
        p.logits[1, :, CHAIN_RIGHT] = 100.0
        assert exact_mi(env, p, OptionPrior.uniform(2, 2), 0, 1) == pytest.approx(math.log(2), abs=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_symmetric_decompositions(self, seed):
        rng = np.random.default_rng(seed)
        P = rng.dirichlet(np.ones(3), size=(3, 2))
        P /= P.sum(axis=2, keepdims=True)
        env = EnvSpec("rand3", 3, 2, P, 0, np.zeros((3, 1)))
        p = random_policy(2, env, rng)
        prior = OptionPrior.learned(2, 3, rng.normal(size=(3, 2)))
        a, b = mi_decompositions(exact_joint(env, p, prior, 0, 3))
        assert abs(a - b) <= 1e-10

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.sampled_from([2, 4, 8]), st.integers(1, 6))
    def test_bounds(self, seed, n, horizon):
        env = make_chain(5, 0.1)
        rng = np.random.default_rng(seed)
        mi = exact_mi(env, random_policy(n, env, rng, 3.0), OptionPrior.uniform(n, 5), 2, horizon)
        assert -1e-12 <= mi <= min(math.log(n), math.log(5)) + 1e-10

    def test_joint_validation(self):
        with pytest.raises(ContractViolation):
            JointDistribution(np.array([[0.5, 0.6]]))


class TestEmpiricalMi:
    def test_independent_uniform(self):
        rng = np.random.default_rng(0)
        samples = np.column_stack([rng.integers(4, size=100_000), rng.integers(4, size=100_000)])
        assert empirical_mi(samples, 4, 4) <= 0.01

    def test_perfectly_correlated(self):
        x = np.arange(4_000) % 4
        assert abs(empirical_mi(np.column_stack([x, x]), 4, 4) - math.log(4)) <= 1e-12

    def test_empty(self):
        with pytest.raises(ContractViolation):
            empirical_mi([], 2, 2)

    def test_converges_to_exact(self):
        env = make_chain(5)
        rng = np.random.default_rng(4)
        p = random_policy(4, env, rng)
        joint = exact_joint(env, p, OptionPrior.uniform(4, 5), 2, 4).p
        flat = rng.choice(joint.size, size=100_000, p=joint.ravel())
        samples = np.column_stack(np.unravel_index(flat, joint.shape))
        assert abs(empirical_mi(samples, 4, 5) - exact_mi(env, p, OptionPrior.uniform(4, 5), 2, 4)) <= 0.05


class TestCapacity:
    def test_duplicate_options(self):
        # options 0 and 1 identical (go left), option 2 distinct (go right)
        env = make_chain(2)
        p = IntraOptionPolicy.zeros(3, 2, 2)
        p.logits[0, :, CHAIN_LEFT] = p.logits[1, :, CHAIN_LEFT] = 100.0
        p.logits[2, :, CHAIN_RIGHT] = 100.0
        prior, capacity = optimal_prior(env, p, 0, 1, 1e-10)
        r = prior.probabilities(0)
        assert capacity == pytest.approx(math.log(2), abs=1e-9)
        assert r[2] == pytest.approx(0.5, abs=1e-5)
        assert r[0] + r[1] == pytest.approx(0.5, abs=1e-5)

    def test_identical_options(self):
        env = make_chain(4, 0.1)
        row = np.random.default_rng(0).normal(size=(1, 4, 2))
        p = IntraOptionPolicy(np.repeat(row, 3, axis=0))
        prior, capacity = optimal_prior(env, p, 1, 3)
        assert abs(capacity) <= 1e-12
        np.testing.assert_allclose(prior.probabilities(1), 1 / 3, atol=1e-12)

    def test_hand_computed_binary_channel(self):
        # Z-channel with crossover 0.5: capacity log2(5/4) bits -> nats
        channel = np.array([[1.0, 0.0], [0.5, 0.5]])
        r, capacity, history = blahut_arimoto(channel, 1e-12)
        assert capacity == pytest.approx(math.log(5 / 4), abs=1e-10)
        assert r[1] == pytest.approx(0.4, abs=1e-5)

    @pytest.mark.parametrize("seed", range(5))
    def test_monotone_and_beats_uniform(self, seed):
        rng = np.random.default_rng(seed)
        channel = rng.dirichlet(np.full(6, 0.3), size=5)
        r, capacity, history = blahut_arimoto(channel, 1e-8)
        assert np.all(np.diff(history) >= -1e-14)
        uniform = history[0]
        assert capacity >= uniform - 1e-14
        # brute force over a coarse simplex grid never beats the capacity
        best = 0.0
        for combo in itertools.product(range(5), repeat=5):
            if sum(combo) == 0:
                continue
            q = np.array(combo, float) / sum(combo)
            joint = q[:, None] * channel
            best = max(best, mi_decompositions(JointDistribution(joint / joint.sum()))[0])
        assert best <= capacity + 1e-9


class TestOccupancy:
    def test_confined_to_room0(self):
        env = make_four_rooms(7)
        traj = Trajectory(0, 0, [(0, 3, 1), (1, 1, 8), (8, 2, 7)])
        occ = occupancy_metrics([traj], env)
        assert occ.room_fraction(0) == 1.0
        assert occ.state_counts.sum() == 4

    def test_full_coverage(self):
        env = make_chain(3)
        trajs = [Trajectory(0, 1, [(1, 0, 0)]), Trajectory(0, 1, [(1, 1, 2)])]
        assert occupancy_metrics(trajs, env).coverage == 1.0

    def test_no_rooms(self):
        occ = occupancy_metrics([Trajectory(0, 0)], make_chain(3))
        assert occ.room_fractions is None
        with pytest.raises(ContractViolation):
            occ.room_fraction(0)

    def test_empty(self):
        with pytest.raises(ContractViolation):
            occupancy_metrics([], make_chain(3))

    def test_random_baseline_is_mostly_room0(self):
        frac = random_policy_room_fraction(make_four_rooms(11), 100, 300, seed=1)
        assert 0.5 < frac < 1.0
