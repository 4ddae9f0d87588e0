"""Checkpoints (JSON) and occupancy heat-map files (CSV)."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import config_from_flat, config_to_flat
from .discriminator import Discriminator, MlpBackend, TabularBackend
from .errors import ContractViolation, InvalidSpecError
from .options import OptionPrior
from .policy import IntraOptionPolicy
from .trainers import AgentState, TrainConfig

FORMAT_VERSION = 1


def _key_to_json(key):
    return list(key) if isinstance(key, tuple) else key


def _key_from_json(key):
    return tuple(key) if isinstance(key, list) else key


def discriminator_to_dict(d: Discriminator) -> dict:
    b = d.backend
    if isinstance(b, TabularBackend):
        state = {
            "backend": "tabular",
            "n_options": b.n_options,
            "alpha": b.alpha,
            "counts": [[_key_to_json(k), v.tolist()] for k, v in b.counts.items()],
        }
    else:
        state = {
            "backend": "mlp",
            "input_dim": b.input_dim,
            "n_options": b.n_options,
            "hidden": list(b.hidden),
            "weights": [[W.tolist(), bias.tolist()] for W, bias in b.weights],
        }
    return {"kind": d.kind, **state}


def discriminator_from_dict(data: dict, env) -> Discriminator:
    if data["backend"] == "tabular":
        counts = {_key_from_json(k): np.array(v, dtype=float) for k, v in data["counts"]}
        backend = TabularBackend(data["n_options"], data["alpha"], counts)
    else:
        backend = MlpBackend(
            data["input_dim"], data["n_options"], data["hidden"], weights=data["weights"]
        )
    return Discriminator(data["kind"], env, backend)


def agent_to_dict(agent: AgentState) -> dict:
    p, prior = agent.policy, agent.prior
    return {
        "policy": {
            "logits": p.logits.tolist(),
            "baseline": p.baseline.tolist(),
            "entropy_coefficient": p.entropy_coefficient,
            "baseline_decay": p.baseline_decay,
        },
        "prior": {
            "kind": prior.kind,
            "n_options": prior.n_options,
            "n_states": prior.n_states,
            "logits": None if prior.logits is None else prior.logits.tolist(),
        },
        "prior_baseline": None if agent.prior_baseline is None else agent.prior_baseline.tolist(),
        "discriminator": discriminator_to_dict(agent.discriminator),
    }


def agent_from_dict(data: dict, env) -> AgentState:
    p = data["policy"]
    policy = IntraOptionPolicy(
        np.array(p["logits"], dtype=float), p["entropy_coefficient"],
        np.array(p["baseline"], dtype=float), p["baseline_decay"],
    )
    pr = data["prior"]
    logits = None if pr["logits"] is None else np.array(pr["logits"], dtype=float)
    prior = OptionPrior(pr["kind"], pr["n_options"], pr["n_states"], logits)
    pb = data.get("prior_baseline")
    return AgentState(
        policy, prior, discriminator_from_dict(data["discriminator"], env),
        None if pb is None else np.array(pb, dtype=float),
    )


@dataclass
class Checkpoint:
    config: TrainConfig
    agent: AgentState
    episode: int
    rng_state: dict | None = None


def save_checkpoint(path, cfg: TrainConfig, agent: AgentState, episode: int, rng=None) -> None:
    data = {
        "format_version": FORMAT_VERSION,
        "episode": episode,
        "config": config_to_flat(cfg),
        "agent": agent_to_dict(agent),
        "rng_state": None if rng is None else rng.bit_generator.state,
    }
    Path(path).write_text(json.dumps(data), encoding="utf-8")


def load_checkpoint(path) -> Checkpoint:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidSpecError(f"{path}: not a checkpoint ({exc})") from exc
    if data.get("format_version") != FORMAT_VERSION:
        raise InvalidSpecError(f"{path}: unsupported checkpoint format")
    cfg = config_from_flat({k: str(v) for k, v in data["config"].items()})
    return Checkpoint(cfg, agent_from_dict(data["agent"], cfg.env), data["episode"], data["rng_state"])


def emit_heatmap_data(counts, env, path) -> None:
    """Write visit fractions as a CSV grid laid out like the environment.

    The first line is ``# total_visits=<n>`` so the counts can be recovered.
    Environments without a grid layout are written as a single row.
    """
    counts = np.asarray(counts, dtype=float)
    if counts.shape != (env.n_states,):
        raise ContractViolation(f"counts has shape {counts.shape}, expected ({env.n_states},)")
    rows, cols = env.grid_shape or (1, env.n_states)
    total = counts.sum()
    frac = counts / total if total > 0 else np.zeros_like(counts)
    lines = [f"# total_visits={int(round(total))}"]
    for r in frac.reshape(rows, cols):
        lines.append(",".join(repr(float(x)) for x in r))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_heatmap_data(path) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(fraction_grid, counts)`` from a file written by :func:`emit_heatmap_data`."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("# total_visits="):
        raise InvalidSpecError(f"{path}: missing total_visits header")
    total = int(lines[0].split("=", 1)[1])
    grid = np.array([[float(x) for x in line.split(",")] for line in lines[1:] if line])
    return grid, np.rint(grid.ravel() * total)
