"""Option identities, option priors and trajectory records."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, InvalidSpecError

UNIFORM = "uniform"
LEARNED = "learned"


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - np.max(z, axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - np.max(z, axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


@dataclass(eq=False)
class OptionPrior:
    """Distribution over options given the start state.

    ``kind == "uniform"`` is the fixed ``1/N`` prior; ``kind == "learned"``
    keeps one logit vector per state (shape ``(n_states, n_options)``).
    """

    kind: str
    n_options: int
    n_states: int
    logits: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in (UNIFORM, LEARNED):
            raise InvalidSpecError(f"unknown prior kind {self.kind!r}")
        if self.n_options < 1 or self.n_states < 1:
            raise InvalidSpecError("prior needs at least one option and one state")
        if self.kind == LEARNED:
            if self.logits is None:
                self.logits = np.zeros((self.n_states, self.n_options))
            self.logits = np.asarray(self.logits, dtype=float)
            if self.logits.shape != (self.n_states, self.n_options):
                raise InvalidSpecError(f"prior logits shape {self.logits.shape}")
        elif self.logits is not None:
            raise InvalidSpecError("uniform prior carries no logits")

    @classmethod
    def uniform(cls, n_options: int, n_states: int) -> "OptionPrior":
        return cls(UNIFORM, n_options, n_states)

    @classmethod
    def learned(cls, n_options: int, n_states: int, logits=None) -> "OptionPrior":
        return cls(LEARNED, n_options, n_states, logits)

    def _check_state(self, s):
        if not 0 <= s < self.n_states:
            raise ContractViolation(f"state {s} out of range [0, {self.n_states})")

    def probabilities(self, s: int) -> np.ndarray:
        self._check_state(s)
        if self.kind == UNIFORM:
            return np.full(self.n_options, 1.0 / self.n_options)
        return softmax(self.logits[s])

    def entropy(self, s: int) -> float:
        if self.kind == UNIFORM:
            return float(np.log(self.n_options))
        p = self.probabilities(s)
        logp = log_softmax(self.logits[s])
        return float(-np.sum(p * logp))

    def copy(self) -> "OptionPrior":
        logits = None if self.logits is None else self.logits.copy()
        return OptionPrior(self.kind, self.n_options, self.n_states, logits)

    def __eq__(self, other):
        if not isinstance(other, OptionPrior):
            return NotImplemented
        same_logits = (
            self.logits is None and other.logits is None
        ) or (
            self.logits is not None and other.logits is not None
            and np.array_equal(self.logits, other.logits)
        )
        return (self.kind, self.n_options, self.n_states) == (
            other.kind, other.n_options, other.n_states
        ) and same_logits

    __hash__ = None


def sample_option(prior: OptionPrior, s0: int, rng: np.random.Generator) -> int:
    if prior.kind == UNIFORM:
        prior._check_state(s0)
        return int(rng.integers(prior.n_options))
    p = prior.probabilities(s0)
    w = int(np.searchsorted(np.cumsum(p), rng.random(), side="right"))
    return min(w, prior.n_options - 1)


def prior_log_prob(prior: OptionPrior, s0: int, w: int) -> float:
    if not 0 <= w < prior.n_options:
        raise ContractViolation(f"option {w} out of range")
    prior._check_state(s0)
    if prior.kind == UNIFORM:
        return -float(np.log(prior.n_options))
    return float(log_softmax(prior.logits[s0])[w])


def reinforce_prior(prior: OptionPrior, s0: int, w: int, r: float, step_size: float) -> OptionPrior:
    """Score-function ascent on the logits at ``s0``; updates ``prior`` in place.

    ``logits[s0] += step_size * r * (onehot(w) - softmax(logits[s0]))``
    """
    if prior.kind != LEARNED:
        raise ContractViolation("cannot reinforce a uniform prior")
    if step_size <= 0:
        raise ContractViolation("step_size must be positive")
    if r == 0.0:
        return prior
    grad = -prior.probabilities(s0)
    grad[w] += 1.0
    prior.logits[s0] += step_size * r * grad
    return prior


@dataclass
class Trajectory:
    """One option execution: the steps taken and where it ended."""

    option: int
    start: int
    steps: list = field(default_factory=list)
    final_state: int | None = None
    intrinsic_return: float = 0.0

    def __post_init__(self):
        if self.final_state is None:
            self.final_state = self.steps[-1][2] if self.steps else self.start

    def __len__(self):
        return len(self.steps)

    @property
    def states(self) -> list[int]:
        """Every visited state, starting with ``start``."""
        return [self.start] + [t for _, _, t in self.steps]

    def validate(self, horizon: int | None = None) -> None:
        prev = self.start
        for k, (s, _, t) in enumerate(self.steps):
            if s != prev:
                raise ContractViolation(f"trajectory broken at step {k}: {s} != {prev}")
            prev = t
        if self.final_state != prev:
            raise ContractViolation("final_state does not match the last step")
        if horizon is not None and len(self.steps) > horizon:
            raise ContractViolation(f"trajectory longer than horizon {horizon}")
