"""Intrinsic rewards, all in nats.

Every reward has the form ``log q(option | evidence) - log p(option | s0)``;
the three algorithms differ only in what evidence the posterior sees and in
whether the prior is learned.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .discriminator import (
    DIAYN_STATE, VALOR_TRAJECTORY, VIC_PAIR, Discriminator, PairKey, StateKey,
    predict_log_prob, trajectory_key,
)
from .errors import ContractViolation
from .options import UNIFORM, OptionPrior, Trajectory, prior_log_prob

_EXPECTED_KIND = {"vic": VIC_PAIR, "diayn": DIAYN_STATE, "valor": VALOR_TRAJECTORY}


@dataclass
class IntrinsicRewardSpec:
    algorithm: str
    prior: OptionPrior
    discriminator: Discriminator

    def __post_init__(self):
        if self.algorithm not in _EXPECTED_KIND:
            raise ContractViolation(f"unknown algorithm {self.algorithm!r}")
        want = _EXPECTED_KIND[self.algorithm]
        if self.discriminator.kind != want:
            raise ContractViolation(
                f"{self.algorithm} needs a {want} discriminator, got {self.discriminator.kind}"
            )
        if self.algorithm != "vic" and self.prior.kind != UNIFORM:
            raise ContractViolation(f"{self.algorithm} uses a fixed uniform option prior")
        if self.prior.n_options != self.discriminator.n_options:
            raise ContractViolation("prior and discriminator disagree on the option count")


def _require(spec: IntrinsicRewardSpec, algorithm: str):
    if spec.algorithm != algorithm:
        raise ContractViolation(f"{algorithm} reward requested from a {spec.algorithm} spec")


def r_vic(spec: IntrinsicRewardSpec, s0: int, sf: int, w: int) -> float:
    _require(spec, "vic")
    return predict_log_prob(spec.discriminator, PairKey(s0, sf), w) - prior_log_prob(spec.prior, s0, w)


def r_diayn(spec: IntrinsicRewardSpec, s: int, w: int) -> float:
    """Per-state reward; the action-entropy bonus lives in the policy update."""
    _require(spec, "diayn")
    return predict_log_prob(spec.discriminator, StateKey(s), w) + math.log(spec.prior.n_options)


def r_valor(spec: IntrinsicRewardSpec, traj: Trajectory, w: int) -> float:
    _require(spec, "valor")
    key = trajectory_key(spec.discriminator.env, traj)
    return predict_log_prob(spec.discriminator, key, w) + math.log(spec.prior.n_options)


def _log_ratio(q: float, p: float) -> float:
    return math.log(q) - math.log(p)


def reward_gap_analysis(n_options: int) -> tuple[float, float]:
    """Rewards under a uniform prior for a confident vs an uninformed posterior.

    Returns ``(log N, 0)``: a state the posterior attributes to the option
    with certainty earns ``log 1 + log N``; a never-seen state, where the
    posterior is still ``1/N``, earns ``log(1/N) + log N``.
    """
    if n_options < 1:
        raise ContractViolation("need at least one option")
    p = 1.0 / n_options
    known = _log_ratio(1.0, p)
    unseen = _log_ratio(p, p)
    return known, unseen
