"""Training loops for VIC, DIAYN and VALOR on enumerable environments."""
from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, field, fields

import numpy as np

from . import discriminator as disc_mod
from .discriminator import PairKey, StateKey, make_discriminator, trajectory_key
from .env import EnvSpec, step
from .errors import ContractViolation, InvalidSpecError, NumericalFailure
from .options import OptionPrior, Trajectory, reinforce_prior, sample_option
from .oracle import empirical_mi, exact_mi, occupancy_metrics
from .policy import IntraOptionPolicy, act, act_greedy, returns_to_go, update_reinforce
from .rewards import IntrinsicRewardSpec, r_diayn, r_valor, r_vic

ALGORITHMS = ("vic", "diayn", "valor")
CSV_COLUMNS = (
    "episode", "mean_r_intrinsic", "disc_loss", "prior_entropy",
    "empirical_mi", "room0_frac", "static_frac",
)
_DISC_KIND = {
    "vic": disc_mod.VIC_PAIR,
    "diayn": disc_mod.DIAYN_STATE,
    "valor": disc_mod.VALOR_TRAJECTORY,
}
# VIC and VALOR see one terminal reward of at most ln N per episode while DIAYN
# sums a reward at every step, so the per-episode returns differ ~horizon-fold.
DEFAULT_POLICY_LR = {"vic": 1.0, "diayn": 0.05, "valor": 1.0}


@dataclass
class TrainConfig:
    algorithm: str
    env: EnvSpec
    n_options: int = 8
    horizon: int | None = None
    episodes: int = 1000
    policy_lr: float | None = None  # None: DEFAULT_POLICY_LR[algorithm]
    disc_lr: float = 0.1
    prior_lr: float = 0.05
    entropy_coefficient: float = 0.01
    gamma: float = 0.99
    seed: int = 0
    vic_reset_period: int = 50
    eval_every: int = 100
    checkpoint_every: int = 0
    disc_backend: str = "tabular"
    disc_alpha: float = 1.0
    disc_hidden: tuple = (32,)
    baseline_decay: float = 0.99

    def __post_init__(self):
        if self.horizon is None:
            self.horizon = self.env.horizon_default
        self.disc_hidden = tuple(int(h) for h in self.disc_hidden)
        if self.algorithm not in ALGORITHMS:
            raise InvalidSpecError(f"unknown algorithm {self.algorithm!r}")
        if self.policy_lr is None:
            self.policy_lr = DEFAULT_POLICY_LR[self.algorithm]
        for name in ("n_options", "horizon", "episodes", "vic_reset_period", "eval_every"):
            if getattr(self, name) < 1:
                raise InvalidSpecError(f"{name} must be positive")
        for name in ("policy_lr", "disc_lr", "prior_lr", "disc_alpha"):
            if not 0 < getattr(self, name) < math.inf:
                raise InvalidSpecError(f"{name} must be positive and finite")
        if self.entropy_coefficient < 0 or self.checkpoint_every < 0:
            raise InvalidSpecError("entropy_coefficient and checkpoint_every must be non-negative")
        if not 0 < self.gamma <= 1 or not 0 <= self.baseline_decay < 1:
            raise InvalidSpecError("gamma must lie in (0, 1], baseline_decay in [0, 1)")
        if self.disc_backend not in ("tabular", "mlp"):
            raise InvalidSpecError(f"unknown discriminator backend {self.disc_backend!r}")

    def __eq__(self, other):
        if not isinstance(other, TrainConfig):
            return NotImplemented
        return all(getattr(self, f.name) == getattr(other, f.name) for f in fields(self))


@dataclass(eq=False)
class AgentState:
    policy: IntraOptionPolicy
    prior: OptionPrior
    discriminator: disc_mod.Discriminator
    prior_baseline: np.ndarray | None = None

    def __eq__(self, other):
        if not isinstance(other, AgentState):
            return NotImplemented
        pb = (self.prior_baseline is None and other.prior_baseline is None) or (
            self.prior_baseline is not None and other.prior_baseline is not None
            and np.array_equal(self.prior_baseline, other.prior_baseline)
        )
        return (
            self.policy == other.policy
            and self.prior == other.prior
            and self.discriminator == other.discriminator
            and pb
        )

    __hash__ = None


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


@dataclass
class RunLog:
    """Metrics at every ``eval_every`` boundary plus raw per-episode series."""

    records: list = field(default_factory=list)
    episode_rewards: list = field(default_factory=list)
    episode_losses: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    agent: AgentState | None = field(default=None, compare=False, repr=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rec in self.records:
            writer.writerow([_fmt(rec.get(c)) for c in CSV_COLUMNS])
        return buf.getvalue()

    def episodes_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("episode", "r_intrinsic", "disc_loss"))
        for i, (r, l) in enumerate(zip(self.episode_rewards, self.episode_losses), start=1):
            writer.writerow((i, _fmt(r), _fmt(l)))
        return buf.getvalue()

    @staticmethod
    def records_from_csv(text: str) -> list[dict]:
        rows = list(csv.DictReader(io.StringIO(text)))
        out = []
        for row in rows:
            rec = {}
            for c in CSV_COLUMNS:
                v = row[c]
                rec[c] = None if v == "" else (int(v) if c == "episode" else float(v))
            out.append(rec)
        return out

    def moving_average_losses(self, window: int = 100) -> np.ndarray:
        x = np.asarray(self.episode_losses, dtype=float)
        if len(x) < window:
            return np.array([x.mean()]) if len(x) else x
        c = np.cumsum(np.insert(x, 0, 0.0))
        return (c[window:] - c[:-window]) / window


def rollout(
    env: EnvSpec, policy: IntraOptionPolicy, w: int, s0: int, horizon: int,
    rng: np.random.Generator | None = None, greedy: bool = False,
) -> Trajectory:
    """Run option ``w`` from ``s0`` for ``horizon`` steps or until termination.

    Greedy rollouts still draw from ``rng`` for stochastic transitions; on a
    deterministic environment they may pass ``rng=None``.
    """
    traj = Trajectory(option=w, start=s0)
    s = s0
    if rng is None:
        rng = np.random.default_rng(0)
    for _ in range(horizon):
        a = act_greedy(policy, s, w) if greedy else act(policy, s, w, rng)
        nxt, done = step(env, s, a, rng)
        traj.steps.append((s, a, nxt))
        s = nxt
        if done:
            break
    traj.final_state = s
    return traj


def is_static(traj: Trajectory, threshold: float = 0.9, burn_in: float = 0.1) -> bool:
    visited = [t for _, _, t in traj.steps]
    if not visited:
        return True
    tail = visited[int(math.floor(burn_in * len(visited))):]
    return Counter(tail).most_common(1)[0][1] >= threshold * len(tail)


def detect_static_collapse(log: RunLog | None, eval_trajs: list[Trajectory]) -> float:
    """Fraction of evaluation trajectories that sit on one state.

    A trajectory counts as static when, after discarding the first 10% of its
    steps, a single state accounts for at least 90% of the remaining visits.
    The result is stored in ``log.summary["static_frac"]`` when a log is given.
    """
    if not eval_trajs:
        raise ContractViolation("detect_static_collapse needs evaluation trajectories")
    frac = float(np.mean([is_static(t) for t in eval_trajs]))
    if log is not None:
        log.summary["static_frac"] = frac
    return frac


def greedy_eval(agent: AgentState, env: EnvSpec, horizon: int, seed: int = 0) -> list[Trajectory]:
    """One greedy rollout per option from the initial state."""
    rng = np.random.default_rng(seed)
    return [
        rollout(env, agent.policy, w, env.initial_state, horizon, rng, greedy=True)
        for w in range(agent.policy.n_options)
    ]


def decoder_accuracy(agent: AgentState, env: EnvSpec, trajs: list[Trajectory]) -> float:
    """Share of trajectories whose option is the posterior's argmax."""
    d = agent.discriminator
    hits = []
    for traj in trajs:
        if d.kind == disc_mod.VALOR_TRAJECTORY:
            key = trajectory_key(env, traj)
        elif d.kind == disc_mod.VIC_PAIR:
            key = PairKey(traj.start, traj.final_state)
        else:
            key = StateKey(traj.final_state)
        hits.append(int(np.argmax(d.probs(key))) == traj.option)
    return float(np.mean(hits))


def build_agent(cfg: TrainConfig) -> AgentState:
    env = cfg.env
    init_rng = np.random.default_rng([cfg.seed, 1])
    policy = IntraOptionPolicy.zeros(
        cfg.n_options, env.n_states, env.n_actions,
        entropy_coefficient=cfg.entropy_coefficient, baseline_decay=cfg.baseline_decay,
    )
    if cfg.algorithm == "vic":
        prior = OptionPrior.learned(cfg.n_options, env.n_states)
        prior_baseline = np.zeros(env.n_states)
    else:
        prior = OptionPrior.uniform(cfg.n_options, env.n_states)
        prior_baseline = None
    disc = make_discriminator(
        _DISC_KIND[cfg.algorithm], env, cfg.n_options, cfg.disc_backend,
        alpha=cfg.disc_alpha, hidden=cfg.disc_hidden, rng=init_rng,
    )
    return AgentState(policy, prior, disc, prior_baseline)


@dataclass
class _Episode:
    traj: Trajectory
    reward: float
    loss: float


class _Trainer:
    def __init__(self, cfg: TrainConfig, on_checkpoint=None):
        if cfg.algorithm != self.algorithm:
            raise ContractViolation(f"{self.algorithm} trainer given a {cfg.algorithm} config")
        self.cfg = cfg
        self.env = cfg.env
        self.rng = np.random.default_rng(cfg.seed)
        self.agent = build_agent(cfg)
        self.spec = IntrinsicRewardSpec(cfg.algorithm, self.agent.prior, self.agent.discriminator)
        self.on_checkpoint = on_checkpoint
        self.log = RunLog(agent=self.agent)

    def episode(self, index: int) -> _Episode:
        raise NotImplementedError

    def _discounted(self, rewards):
        return returns_to_go(rewards, self.cfg.gamma)

    def run(self) -> RunLog:
        cfg = self.cfg
        window: list[_Episode] = []
        for ep in range(cfg.episodes):
            try:
                out = self.episode(ep)
            except NumericalFailure as exc:
                raise NumericalFailure(
                    f"{cfg.algorithm} training diverged", episode=ep, seed=cfg.seed, cause=str(exc)
                ) from exc
            self.log.episode_rewards.append(out.reward)
            self.log.episode_losses.append(out.loss)
            window.append(out)
            if (ep + 1) % cfg.eval_every == 0 or ep + 1 == cfg.episodes:
                self.log.records.append(self._record(ep + 1, window))
                window = []
            if cfg.checkpoint_every and (ep + 1) % cfg.checkpoint_every == 0 and self.on_checkpoint:
                self.on_checkpoint(ep + 1, self.agent, self.rng)
        self._finalize()
        return self.log

    def _record(self, episode: int, window: list[_Episode]) -> dict:
        env, agent = self.env, self.agent
        init = env.initial_state
        pairs = [(e.traj.option, e.traj.final_state) for e in window if e.traj.start == init]
        room0 = None
        if env.room_of is not None:
            room0 = occupancy_metrics([e.traj for e in window], env).room_fraction(0)
        evals = greedy_eval(agent, env, self.cfg.horizon, seed=self.cfg.seed)
        return {
            "episode": episode,
            "mean_r_intrinsic": float(np.mean([e.reward for e in window])),
            "disc_loss": float(np.mean([e.loss for e in window])),
            "prior_entropy": agent.prior.entropy(init),
            "empirical_mi": empirical_mi(pairs, self.cfg.n_options, env.n_states) if pairs else None,
            "room0_frac": room0,
            "static_frac": detect_static_collapse(None, evals),
        }

    def _finalize(self):
        cfg, env = self.cfg, self.env
        evals = greedy_eval(self.agent, env, cfg.horizon, seed=cfg.seed)
        detect_static_collapse(self.log, evals)
        self.log.summary["decoder_accuracy_greedy"] = decoder_accuracy(self.agent, env, evals)
        if env.n_states <= 2_000:
            self.log.summary["exact_mi"] = exact_mi(
                env, self.agent.policy, self.agent.prior, env.initial_state, cfg.horizon
            )
        if self.log.records:
            last = self.log.records[-1]
            for key in ("mean_r_intrinsic", "disc_loss", "prior_entropy", "empirical_mi", "room0_frac"):
                if last.get(key) is not None:
                    self.log.summary[key] = last[key]


class _VicTrainer(_Trainer):
    algorithm = "vic"

    def __init__(self, cfg, on_checkpoint=None):
        super().__init__(cfg, on_checkpoint)
        self.s0 = cfg.env.initial_state

    def episode(self, index):
        cfg, env, agent = self.cfg, self.env, self.agent
        if index % cfg.vic_reset_period == 0 or self.s0 in env.terminal_states:
            self.s0 = env.initial_state
        s0 = self.s0
        w = sample_option(agent.prior, s0, self.rng)
        traj = rollout(env, agent.policy, w, s0, cfg.horizon, self.rng)
        sf = traj.final_state
        # reward from the posterior as it stood before this episode's regression step
        r = r_vic(self.spec, s0, sf, w)
        loss = disc_mod.update(agent.discriminator, PairKey(s0, sf), w, cfg.disc_lr)
        traj.intrinsic_return = r
        if traj.steps:
            rewards = np.zeros(len(traj.steps))
            rewards[-1] = r
            update_reinforce(agent.policy, traj, self._discounted(rewards), cfg.policy_lr)
        b = agent.prior_baseline
        reinforce_prior(agent.prior, s0, w, r - b[s0], cfg.prior_lr)
        b[s0] = cfg.baseline_decay * b[s0] + (1.0 - cfg.baseline_decay) * r
        if not np.all(np.isfinite(agent.prior.logits[s0])):
            raise NumericalFailure("non-finite prior logits", state=s0)
        self.s0 = sf
        return _Episode(traj, r, loss)


class _DiaynTrainer(_Trainer):
    algorithm = "diayn"

    def episode(self, index):
        cfg, env, agent = self.cfg, self.env, self.agent
        s0 = env.initial_state
        w = sample_option(agent.prior, s0, self.rng)
        traj = rollout(env, agent.policy, w, s0, cfg.horizon, self.rng)
        if not traj.steps:
            return _Episode(traj, 0.0, 0.0)
        visited = [t for _, _, t in traj.steps]
        # score the whole episode first, then regress in visit order
        rewards = np.array([r_diayn(self.spec, s, w) for s in visited])
        losses = [disc_mod.update(agent.discriminator, StateKey(s), w, cfg.disc_lr) for s in visited]
        traj.intrinsic_return = float(rewards.sum())
        update_reinforce(agent.policy, traj, self._discounted(rewards), cfg.policy_lr)
        return _Episode(traj, float(rewards.mean()), float(np.mean(losses)))


class _ValorTrainer(_Trainer):
    algorithm = "valor"

    def episode(self, index):
        cfg, env, agent = self.cfg, self.env, self.agent
        s0 = env.initial_state
        w = sample_option(agent.prior, s0, self.rng)
        traj = rollout(env, agent.policy, w, s0, cfg.horizon, self.rng)
        r = r_valor(self.spec, traj, w)
        loss = disc_mod.update(agent.discriminator, trajectory_key(env, traj), w, cfg.disc_lr)
        traj.intrinsic_return = r
        if traj.steps:
            rewards = np.zeros(len(traj.steps))
            rewards[-1] = r
            update_reinforce(agent.policy, traj, self._discounted(rewards), cfg.policy_lr)
        return _Episode(traj, r, loss)


_TRAINERS = {"vic": _VicTrainer, "diayn": _DiaynTrainer, "valor": _ValorTrainer}


def train_vic(cfg: TrainConfig, on_checkpoint=None) -> RunLog:
    return _VicTrainer(cfg, on_checkpoint).run()


def train_diayn(cfg: TrainConfig, on_checkpoint=None) -> RunLog:
    return _DiaynTrainer(cfg, on_checkpoint).run()


def train_valor(cfg: TrainConfig, on_checkpoint=None) -> RunLog:
    return _ValorTrainer(cfg, on_checkpoint).run()


def train(cfg: TrainConfig, on_checkpoint=None) -> RunLog:
    return _TRAINERS[cfg.algorithm](cfg, on_checkpoint).run()
