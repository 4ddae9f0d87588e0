"""Variational posteriors over options.

Three conditioning forms are supported, selected by ``kind``:

* ``vic_pair``          q(option | s0, s_final)
* ``diayn_state``       q(option | s)
* ``valor_trajectory``  q(option | digest(trajectory))

Each form can be backed by Laplace-smoothed counts or by a small MLP with a
softmax head trained by plain SGD on the cross-entropy.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import EnvSpec
from .errors import ContractViolation, InvalidSpecError, NumericalFailure
from .options import Trajectory, log_softmax, softmax

VIC_PAIR = "vic_pair"
DIAYN_STATE = "diayn_state"
VALOR_TRAJECTORY = "valor_trajectory"
KINDS = (VIC_PAIR, DIAYN_STATE, VALOR_TRAJECTORY)

DIGEST_DECIMALS = 10


@dataclass(frozen=True)
class PairKey:
    s0: int
    sf: int


@dataclass(frozen=True)
class StateKey:
    s: int


@dataclass(frozen=True, eq=False)
class TrajectoryKey:
    digest: np.ndarray

    def __eq__(self, other):
        return isinstance(other, TrajectoryKey) and np.array_equal(self.digest, other.digest)

    def __hash__(self):
        return hash(tuple(np.round(self.digest, DIGEST_DECIMALS)))


_KEY_TYPES = {VIC_PAIR: PairKey, DIAYN_STATE: StateKey, VALOR_TRAJECTORY: TrajectoryKey}


def trajectory_digest(env: EnvSpec, traj: Trajectory) -> np.ndarray:
    """Start features, final features and the mean of the states in between."""
    f = env.feature_of
    middle = [t for _, _, t in traj.steps[:-1]]
    mid = f[middle].mean(axis=0) if middle else np.zeros(env.feature_dim)
    return np.concatenate([f[traj.start], f[traj.final_state], mid])


def trajectory_key(env: EnvSpec, traj: Trajectory) -> TrajectoryKey:
    return TrajectoryKey(trajectory_digest(env, traj))


class TabularBackend:
    """Posterior ``(counts + alpha) / (sum(counts) + N * alpha)`` per key."""

    def __init__(self, n_options: int, alpha: float = 1.0, counts: dict | None = None):
        if alpha <= 0:
            raise InvalidSpecError("Laplace alpha must be positive")
        self.n_options = n_options
        self.alpha = float(alpha)
        self.counts = {} if counts is None else counts

    def probs(self, key) -> np.ndarray:
        c = self.counts.get(key)
        if c is None:
            return np.full(self.n_options, 1.0 / self.n_options)
        return (c + self.alpha) / (c.sum() + self.n_options * self.alpha)

    def log_prob(self, key, w: int) -> float:
        c = self.counts.get(key)
        if c is None:
            return -float(np.log(self.n_options))
        return float(np.log(c[w] + self.alpha) - np.log(c.sum() + self.n_options * self.alpha))

    def update(self, key, w: int, step_size: float = 0.0) -> float:
        loss = -self.log_prob(key, w)
        c = self.counts.get(key)
        if c is None:
            c = self.counts[key] = np.zeros(self.n_options)
        c[w] += 1.0
        return loss

    def __eq__(self, other):
        if not isinstance(other, TabularBackend):
            return NotImplemented
        return (
            self.n_options == other.n_options
            and self.alpha == other.alpha
            and self.counts.keys() == other.counts.keys()
            and all(np.array_equal(v, other.counts[k]) for k, v in self.counts.items())
        )

    __hash__ = None


class MlpBackend:
    """Fully connected tanh network with a softmax head.

    ``hidden=()`` gives plain softmax regression.
    """

    def __init__(self, input_dim: int, n_options: int, hidden=(32,), rng=None, weights=None):
        self.input_dim = input_dim
        self.n_options = n_options
        self.hidden = tuple(int(h) for h in hidden)
        sizes = (input_dim, *self.hidden, n_options)
        if weights is not None:
            self.weights = [(np.asarray(W, float), np.asarray(b, float)) for W, b in weights]
            return
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            W = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_out, fan_in))
            self.weights.append((W, np.zeros(fan_out)))

    def _forward(self, x):
        acts = [x]
        h = x
        for W, b in self.weights[:-1]:
            h = np.tanh(W @ h + b)
            acts.append(h)
        W, b = self.weights[-1]
        return acts, W @ h + b

    def probs(self, x) -> np.ndarray:
        return softmax(self._forward(np.asarray(x, float))[1])

    def log_prob(self, x, w: int) -> float:
        return float(log_softmax(self._forward(np.asarray(x, float))[1])[w])

    def loss_and_grads(self, x, w: int):
        """Cross-entropy ``-log q(w|x)`` and its gradient for every (W, b)."""
        x = np.asarray(x, float)
        acts, z = self._forward(x)
        loss = -float(log_softmax(z)[w])
        delta = softmax(z)
        delta[w] -= 1.0
        grads = [None] * len(self.weights)
        for i in range(len(self.weights) - 1, -1, -1):
            W, _ = self.weights[i]
            grads[i] = (np.outer(delta, acts[i]), delta.copy())
            if i > 0:
                delta = (W.T @ delta) * (1.0 - acts[i] ** 2)
        return loss, grads

    def update(self, x, w: int, step_size: float) -> float:
        if step_size <= 0:
            raise ContractViolation("step_size must be positive")
        loss, grads = self.loss_and_grads(x, w)
        with np.errstate(over="ignore", invalid="ignore"):
            stepped = [(W - step_size * gW, b - step_size * gb) for (W, b), (gW, gb) in zip(self.weights, grads)]
        if not np.isfinite(loss) or not all(np.all(np.isfinite(W)) and np.all(np.isfinite(b)) for W, b in stepped):
            raise NumericalFailure("non-finite discriminator update", loss=loss, option=w)
        for (W, b), (W_new, b_new) in zip(self.weights, stepped):
            W[...] = W_new
            b[...] = b_new
        return loss

    def __eq__(self, other):
        if not isinstance(other, MlpBackend):
            return NotImplemented
        return (
            (self.input_dim, self.n_options, self.hidden)
            == (other.input_dim, other.n_options, other.hidden)
            and all(
                np.array_equal(W1, W2) and np.array_equal(b1, b2)
                for (W1, b1), (W2, b2) in zip(self.weights, other.weights)
            )
        )

    __hash__ = None


def input_dim_for(kind: str, env: EnvSpec) -> int:
    d = env.feature_dim
    return {VIC_PAIR: 2 * d, DIAYN_STATE: d, VALOR_TRAJECTORY: 3 * d}[kind]


class Discriminator:
    """A backend plus the rule that turns conditioning keys into its inputs."""

    def __init__(self, kind: str, env: EnvSpec, backend):
        if kind not in KINDS:
            raise InvalidSpecError(f"unknown discriminator kind {kind!r}")
        self.kind = kind
        self.env = env
        self.backend = backend

    @property
    def n_options(self) -> int:
        return self.backend.n_options

    def encode(self, key):
        if not isinstance(key, _KEY_TYPES[self.kind]):
            raise ContractViolation(f"{type(key).__name__} given to a {self.kind} discriminator")
        tabular = isinstance(self.backend, TabularBackend)
        if isinstance(key, PairKey):
            if tabular:
                return (key.s0, key.sf)
            f = self.env.feature_of
            return np.concatenate([f[key.s0], f[key.sf]])
        if isinstance(key, StateKey):
            return key.s if tabular else self.env.feature_of[key.s]
        if tabular:
            return tuple(float(x) for x in np.round(key.digest, DIGEST_DECIMALS))
        return key.digest

    def probs(self, key) -> np.ndarray:
        return self.backend.probs(self.encode(key))

    def __eq__(self, other):
        if not isinstance(other, Discriminator):
            return NotImplemented
        return self.kind == other.kind and self.backend == other.backend

    __hash__ = None


def make_discriminator(
    kind: str, env: EnvSpec, n_options: int, backend: str = "tabular",
    alpha: float = 1.0, hidden=(32,), rng=None,
) -> Discriminator:
    if backend == "tabular":
        impl = TabularBackend(n_options, alpha)
    elif backend == "mlp":
        impl = MlpBackend(input_dim_for(kind, env), n_options, hidden, rng=rng)
    else:
        raise InvalidSpecError(f"unknown discriminator backend {backend!r}")
    return Discriminator(kind, env, impl)


def predict_log_prob(d: Discriminator, key, w: int) -> float:
    if not 0 <= w < d.n_options:
        raise ContractViolation(f"option {w} out of range")
    return d.backend.log_prob(d.encode(key), w)


def update(d: Discriminator, key, w: int, step_size: float = 0.1) -> float:
    """Move q(.|key) toward ``w``; returns the loss measured before the step."""
    if step_size <= 0:
        raise ContractViolation("step_size must be positive")
    if not 0 <= w < d.n_options:
        raise ContractViolation(f"option {w} out of range")
    return d.backend.update(d.encode(key), w, step_size)


def _flat_params(backend: MlpBackend):
    for W, b in backend.weights:
        yield W
        yield b


def gradient_check(backend: MlpBackend, x, w: int, eps: float = 1e-5, floor: float = 1e-6) -> float:
    """Largest relative gap between backprop and central differences.

    Relative error per entry is ``|g - n| / max(|g|, |n|, floor)``; the floor
    stops entries whose true gradient is ~0 from dividing noise by noise.
    """
    if isinstance(backend, Discriminator):
        x = backend.encode(x)
        backend = backend.backend
    if not isinstance(backend, MlpBackend):
        raise ContractViolation("gradient_check needs an MLP backend")
    _, grads = backend.loss_and_grads(x, w)
    analytic = [g for pair in grads for g in pair]
    worst = 0.0
    for param, g in zip(_flat_params(backend), analytic):
        it = np.nditer(param, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            orig = param[i]
            param[i] = orig + eps
            up = -backend.log_prob(x, w)
            param[i] = orig - eps
            down = -backend.log_prob(x, w)
            param[i] = orig
            num = (up - down) / (2 * eps)
            rel = abs(g[i] - num) / max(abs(g[i]), abs(num), floor)
            worst = max(worst, rel)
    return worst
