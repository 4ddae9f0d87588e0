"""Tabular intra-option policies trained by REINFORCE with an entropy bonus."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, NumericalFailure
from .options import Trajectory, log_softmax, softmax


def log_prob_grad(logits: np.ndarray, a: int) -> np.ndarray:
    """d/dz log softmax(z)[a]."""
    g = -softmax(logits)
    g[a] += 1.0
    return g


def entropy_of_logits(logits: np.ndarray) -> float:
    return float(-np.sum(softmax(logits) * log_softmax(logits)))


def entropy_grad(logits: np.ndarray) -> np.ndarray:
    """d/dz H(softmax(z)) = -p * (log p + H)."""
    p = softmax(logits)
    logp = log_softmax(logits)
    h = -np.sum(p * logp)
    return -p * (logp + h)


def returns_to_go(rewards, gamma: float) -> np.ndarray:
    G = np.zeros(len(rewards))
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        G[t] = acc
    return G


@dataclass(eq=False)
class IntraOptionPolicy:
    """Per-option softmax tables ``logits[option, state, action]``.

    ``baseline[option, state]`` is an exponential moving average of observed
    returns, subtracted from the return before the score-function step.
    """

    logits: np.ndarray
    entropy_coefficient: float = 0.0
    baseline: np.ndarray | None = None
    baseline_decay: float = 0.99

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=float)
        if self.logits.ndim != 3:
            raise ContractViolation("policy logits must have shape (options, states, actions)")
        if self.entropy_coefficient < 0:
            raise ContractViolation("entropy_coefficient must be non-negative")
        if self.baseline is None:
            self.baseline = np.zeros(self.logits.shape[:2])
        self.baseline = np.asarray(self.baseline, dtype=float)

    @classmethod
    def zeros(cls, n_options: int, n_states: int, n_actions: int, **kw) -> "IntraOptionPolicy":
        return cls(np.zeros((n_options, n_states, n_actions)), **kw)

    @property
    def n_options(self) -> int:
        return self.logits.shape[0]

    @property
    def n_actions(self) -> int:
        return self.logits.shape[2]

    def probs(self, s: int, w: int) -> np.ndarray:
        return softmax(self.logits[w, s])

    def action_matrix(self, w: int) -> np.ndarray:
        """pi(a|s, w) for every state, shape (S, A)."""
        return softmax(self.logits[w])

    def copy(self) -> "IntraOptionPolicy":
        return IntraOptionPolicy(
            self.logits.copy(), self.entropy_coefficient, self.baseline.copy(), self.baseline_decay
        )

    def __eq__(self, other):
        if not isinstance(other, IntraOptionPolicy):
            return NotImplemented
        return (
            np.array_equal(self.logits, other.logits)
            and np.array_equal(self.baseline, other.baseline)
            and self.entropy_coefficient == other.entropy_coefficient
            and self.baseline_decay == other.baseline_decay
        )

    __hash__ = None


def act(p: IntraOptionPolicy, s: int, w: int, rng: np.random.Generator) -> int:
    probs = p.probs(s, w)
    a = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
    return min(a, p.n_actions - 1)


def act_greedy(p: IntraOptionPolicy, s: int, w: int) -> int:
    # np.argmax returns the lowest index among ties
    return int(np.argmax(p.logits[w, s]))


def entropy(p: IntraOptionPolicy, s: int, w: int) -> float:
    return entropy_of_logits(p.logits[w, s])


def update_reinforce(
    p: IntraOptionPolicy, traj: Trajectory, returns, step_size: float
) -> IntraOptionPolicy:
    """One REINFORCE step over a trajectory, in place.

    Gradients for all steps are taken at the pre-update logits and applied
    together. The baseline for each visited (option, state) is read before
    the step and then moved toward the observed return.
    """
    returns = np.asarray(returns, dtype=float)
    if len(returns) != len(traj.steps):
        raise ContractViolation(f"{len(returns)} returns for {len(traj.steps)} steps")
    if step_size <= 0:
        raise ContractViolation("step_size must be positive")
    w = traj.option
    delta = np.zeros_like(p.logits[w])
    seen_baseline = {}
    for (s, a, _), G in zip(traj.steps, returns):
        b = seen_baseline.setdefault(s, p.baseline[w, s])
        row = p.logits[w, s]
        delta[s] += (G - b) * log_prob_grad(row, a)
        if p.entropy_coefficient:
            delta[s] += p.entropy_coefficient * entropy_grad(row)
    with np.errstate(over="ignore", invalid="ignore"):
        updated = p.logits[w] + step_size * delta
    if not np.all(np.isfinite(updated)):
        raise NumericalFailure("non-finite policy update", option=w, start=traj.start)
    p.logits[w] = updated
    decay = p.baseline_decay
    for (s, _, _), G in zip(traj.steps, returns):
        p.baseline[w, s] = decay * p.baseline[w, s] + (1.0 - decay) * G
    return p
