"""Ground-truth information quantities and occupancy metrics.

Everything here works on the exact transition tensor, so it is only meant for
small environments (guarded by ``MAX_STATES`` / ``MAX_HORIZON``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import EnvSpec, step
from .errors import ContractViolation
from .options import OptionPrior, Trajectory
from .policy import IntraOptionPolicy

MAX_STATES = 10_000
MAX_HORIZON = 200


def _guard(env: EnvSpec, horizon: int):
    if env.n_states > MAX_STATES:
        raise ContractViolation(f"exact computation limited to {MAX_STATES} states")
    if not 0 <= horizon <= MAX_HORIZON:
        raise ContractViolation(f"exact computation limited to horizon <= {MAX_HORIZON}")


def entropy(p) -> float:
    p = np.asarray(p, dtype=float).ravel()
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def policy_transition_matrix(env: EnvSpec, policy: IntraOptionPolicy, w: int) -> np.ndarray:
    """M[s, s'] = sum_a pi(a|s,w) P[s,a,s']; terminal states absorb."""
    M = np.einsum("sa,sat->st", policy.action_matrix(w), env.transition)
    for s in env.terminal_states:
        M[s] = 0.0
        M[s, s] = 1.0
    return M


def exact_final_state_distribution(
    env: EnvSpec, policy: IntraOptionPolicy, w: int, s0: int, horizon: int
) -> np.ndarray:
    _guard(env, horizon)
    M = policy_transition_matrix(env, policy, w)
    d = np.zeros(env.n_states)
    d[s0] = 1.0
    for _ in range(horizon):
        d = d @ M
    return d


def option_channel(env: EnvSpec, policy: IntraOptionPolicy, s0: int, horizon: int) -> np.ndarray:
    """Rows are p(s_f | option, s0), shape (N, S)."""
    return np.stack([
        exact_final_state_distribution(env, policy, w, s0, horizon)
        for w in range(policy.n_options)
    ])


@dataclass
class JointDistribution:
    """p(option, s_f | s0) as an (N, S) table."""

    p: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        if np.any(self.p < 0) or abs(self.p.sum() - 1.0) > 1e-10:
            raise ContractViolation("joint must be non-negative and sum to 1")

    @classmethod
    def from_channel(cls, prior_probs, channel) -> "JointDistribution":
        return cls(np.asarray(prior_probs)[:, None] * channel)


def mi_decompositions(joint: JointDistribution) -> tuple[float, float]:
    """Mutual information computed both ways round.

    Returns ``(H(sf) - H(sf|option), H(option) - H(option|sf))``.
    """
    p = joint.p
    p_opt = p.sum(axis=1)
    p_sf = p.sum(axis=0)
    h_sf_given_opt = sum(
        p_opt[w] * entropy(p[w] / p_opt[w]) for w in range(len(p_opt)) if p_opt[w] > 0
    )
    h_opt_given_sf = sum(
        p_sf[s] * entropy(p[:, s] / p_sf[s]) for s in range(len(p_sf)) if p_sf[s] > 0
    )
    return entropy(p_sf) - h_sf_given_opt, entropy(p_opt) - h_opt_given_sf


def mutual_information(joint: JointDistribution) -> float:
    return mi_decompositions(joint)[0]


def exact_joint(env, policy, prior: OptionPrior, s0: int, horizon: int) -> JointDistribution:
    return JointDistribution.from_channel(prior.probabilities(s0), option_channel(env, policy, s0, horizon))


def exact_mi(env: EnvSpec, policy: IntraOptionPolicy, prior: OptionPrior, s0: int, horizon: int) -> float:
    """I(option; s_f | s0) in nats for the given policies and prior."""
    return mutual_information(exact_joint(env, policy, prior, s0, horizon))


def empirical_mi(samples, n_options: int, n_states: int) -> float:
    """Plug-in MI of the empirical (option, state) joint; no bias correction."""
    samples = np.asarray(samples, dtype=int).reshape(-1, 2)
    if len(samples) == 0:
        raise ContractViolation("empirical_mi needs at least one sample")
    counts = np.zeros((n_options, n_states))
    np.add.at(counts, (samples[:, 0], samples[:, 1]), 1.0)
    return mutual_information(JointDistribution(counts / counts.sum()))


def _channel_mi(r: np.ndarray, channel: np.ndarray) -> tuple[float, np.ndarray]:
    """MI of prior ``r`` through ``channel`` plus per-input divergences D(p(.|x) || q)."""
    q = r @ channel
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(channel > 0, channel / q, 1.0)
        div = np.sum(np.where(channel > 0, channel * np.log(ratio), 0.0), axis=1)
    return float(r @ div), div


def blahut_arimoto(channel: np.ndarray, tolerance: float = 1e-8, max_iter: int = 100_000):
    """Capacity-achieving input distribution for a discrete channel.

    Starts from uniform. Stops once the standard upper bound
    ``max_x D(p(.|x) || q)`` is within ``tolerance`` of the current MI, which
    certifies the returned capacity to that accuracy.

    Returns ``(prior, capacity, history)`` where ``history`` holds the MI
    after every iteration (non-decreasing).
    """
    channel = np.asarray(channel, dtype=float)
    n = channel.shape[0]
    r = np.full(n, 1.0 / n)
    mi, div = _channel_mi(r, channel)
    history = [mi]
    for _ in range(max_iter):
        if div.max() - mi < tolerance:
            break
        r = r * np.exp(div - div.max())
        r /= r.sum()
        mi, div = _channel_mi(r, channel)
        history.append(mi)
    return r, mi, history


def optimal_prior(
    env: EnvSpec, policy: IntraOptionPolicy, s0: int, horizon: int, tolerance: float = 1e-8
) -> tuple[OptionPrior, float]:
    """MI-maximizing option prior at ``s0`` for fixed intra-option policies."""
    if tolerance <= 0:
        raise ContractViolation("tolerance must be positive")
    r, capacity, _ = blahut_arimoto(option_channel(env, policy, s0, horizon), tolerance)
    logits = np.zeros((env.n_states, policy.n_options))
    with np.errstate(divide="ignore"):
        logits[s0] = np.log(r)
    return OptionPrior.learned(policy.n_options, env.n_states, logits), capacity


@dataclass
class Occupancy:
    room_fractions: dict | None
    state_counts: np.ndarray
    coverage: float

    def room_fraction(self, room: int) -> float:
        if self.room_fractions is None:
            raise ContractViolation("environment has no room labels")
        return self.room_fractions.get(room, 0.0)


def visit_counts(trajs, n_states: int) -> np.ndarray:
    counts = np.zeros(n_states)
    for traj in trajs:
        np.add.at(counts, traj.states, 1.0)
    return counts


def occupancy_metrics(trajs: list[Trajectory], env: EnvSpec) -> Occupancy:
    """Visit histograms over every state of every trajectory, start included."""
    if not trajs:
        raise ContractViolation("occupancy_metrics needs at least one trajectory")
    counts = visit_counts(trajs, env.n_states)
    open_states = env.open_states
    coverage = float(np.mean(counts[open_states] > 0))
    rooms = None
    if env.room_of is not None:
        total = counts.sum()
        rooms = {}
        for s, label in env.room_of.items():
            rooms[label] = rooms.get(label, 0.0) + counts[s] / total
    return Occupancy(rooms, counts, coverage)


def random_policy_rollouts(env: EnvSpec, horizon: int, episodes: int, rng: np.random.Generator):
    """Uniform-random-action episodes from the initial state."""
    out = []
    for _ in range(episodes):
        s = env.initial_state
        traj = Trajectory(option=0, start=s)
        for _ in range(horizon):
            a = int(rng.integers(env.n_actions))
            nxt, done = step(env, s, a, rng)
            traj.steps.append((s, a, nxt))
            s = nxt
            if done:
                break
        traj.final_state = s
        out.append(traj)
    return out


def random_policy_room_fraction(env: EnvSpec, horizon: int, episodes: int, seed: int = 0, room: int = 0) -> float:
    trajs = random_policy_rollouts(env, horizon, episodes, np.random.default_rng(seed))
    return occupancy_metrics(trajs, env).room_fraction(room)
