"""Training configs and experiment manifests in the flat key=value format.

Recognised keys::

    env.name          four_rooms | chain | point_mass | file
    env.side env.n env.slip env.grid env.path
    train.algorithm   vic | diayn | valor
    train.n_options train.horizon train.episodes train.seed
    train.policy_lr train.disc_lr train.prior_lr train.entropy_coef
    train.gamma train.vic_reset_period train.eval_every train.checkpoint_every
    train.baseline_decay
    disc.backend      tabular | mlp
    disc.alpha disc.hidden   (hidden widths comma separated, empty for none)

A manifest adds ``experiment.name``, ``experiment.seeds`` (comma separated),
optional ``experiment.output`` and ``experiment.jobs``, and per-variant
overrides written as ``variant.<label>.<key>=value``. Keys without the
``variant.`` prefix form the base shared by every variant.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .env import make_env
from .errors import InvalidSpecError
from .flatkv import format_flat, parse_flat
from .trainers import TrainConfig


def _hidden(text: str) -> tuple:
    return tuple(int(x) for x in text.split(",") if x.strip())


_TRAIN_KEYS = {
    "train.algorithm": ("algorithm", str),
    "train.n_options": ("n_options", int),
    "train.horizon": ("horizon", int),
    "train.episodes": ("episodes", int),
    "train.seed": ("seed", int),
    "train.policy_lr": ("policy_lr", float),
    "train.disc_lr": ("disc_lr", float),
    "train.prior_lr": ("prior_lr", float),
    "train.entropy_coef": ("entropy_coefficient", float),
    "train.gamma": ("gamma", float),
    "train.vic_reset_period": ("vic_reset_period", int),
    "train.eval_every": ("eval_every", int),
    "train.checkpoint_every": ("checkpoint_every", int),
    "train.baseline_decay": ("baseline_decay", float),
    "disc.backend": ("disc_backend", str),
    "disc.alpha": ("disc_alpha", float),
    "disc.hidden": ("disc_hidden", _hidden),
}
_ENV_PARAMS = {"env.side": "side", "env.n": "n", "env.slip": "slip", "env.grid": "grid", "env.path": "path"}


def config_from_flat(kv: dict) -> TrainConfig:
    unknown = set(kv) - set(_TRAIN_KEYS) - set(_ENV_PARAMS) - {"env.name"}
    if unknown:
        raise InvalidSpecError(f"unknown config keys: {sorted(unknown)}")
    if "env.name" not in kv or "train.algorithm" not in kv:
        raise InvalidSpecError("config needs env.name and train.algorithm")
    params = {p: kv[k] for k, p in _ENV_PARAMS.items() if k in kv}
    try:
        env = make_env(kv["env.name"], **params)
        if kv["env.name"] == "file":
            env = dataclasses.replace(env, params={"path": params["path"]})
        kwargs = {f: conv(kv[k]) for k, (f, conv) in _TRAIN_KEYS.items() if k in kv}
    except (KeyError, ValueError, OSError) as exc:
        if isinstance(exc, InvalidSpecError):
            raise
        raise InvalidSpecError(f"bad config value: {exc}") from exc
    return TrainConfig(env=env, **kwargs)


def config_to_flat(cfg: TrainConfig) -> dict:
    env = cfg.env
    if "path" in env.params:
        out = {"env.name": "file", "env.path": env.params["path"]}
    else:
        out = {"env.name": env.name}
        out.update({f"env.{k}": v for k, v in env.params.items()})
    for key, (attr, _) in _TRAIN_KEYS.items():
        value = getattr(cfg, attr)
        if attr == "disc_hidden":
            value = ",".join(str(h) for h in value)
        out[key] = value
    return out


def load_config(path) -> TrainConfig:
    return config_from_flat(parse_flat(Path(path).read_text(encoding="utf-8")))


def dump_config(cfg: TrainConfig) -> str:
    return format_flat(config_to_flat(cfg))


@dataclass
class ExperimentManifest:
    name: str
    variants: dict  # label -> flat config dict (train.seed overridden per run)
    seeds: list
    output: str | None = None
    jobs: int = 1
    configs: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.variants or not self.seeds:
            raise InvalidSpecError("manifest needs at least one variant and one seed")
        if self.jobs < 1:
            raise InvalidSpecError("experiment.jobs must be positive")
        # validate every variant up front so a bad config fails before any run starts
        self.configs = {label: config_from_flat(kv) for label, kv in self.variants.items()}

    def run_config(self, label: str, seed: int) -> TrainConfig:
        return dataclasses.replace(self.configs[label], seed=int(seed))


def manifest_from_flat(kv: dict) -> ExperimentManifest:
    base, overrides = {}, {}
    meta = {}
    for key, value in kv.items():
        if key.startswith("experiment."):
            meta[key.split(".", 1)[1]] = value
        elif key.startswith("variant."):
            parts = key.split(".", 2)
            if len(parts) < 3:
                raise InvalidSpecError(f"variant key {key!r} must look like variant.<label>.<key>")
            overrides.setdefault(parts[1], {})[parts[2]] = value
        else:
            base[key] = value
    if "name" not in meta or "seeds" not in meta:
        raise InvalidSpecError("manifest needs experiment.name and experiment.seeds")
    try:
        seeds = [int(s) for s in meta["seeds"].split(",") if s.strip()]
        jobs = int(meta.get("jobs", 1))
    except ValueError as exc:
        raise InvalidSpecError(f"bad manifest value: {exc}") from exc
    variants = {label: {**base, **kv_} for label, kv_ in overrides.items()} if overrides else {"default": base}
    return ExperimentManifest(meta["name"], variants, seeds, meta.get("output"), jobs)


def load_manifest(path) -> ExperimentManifest:
    return manifest_from_flat(parse_flat(Path(path).read_text(encoding="utf-8")))
