"""Experiment orchestration: seed sweeps, run directories and summaries.

Layout of one invocation::

    <out_root>/<name>-<timestamp>/
        manifest.cfg
        summary.json
        <variant>/seed-<k>/
            config.cfg runlog.csv episodes.csv metrics.json
            checkpoint.json [checkpoint-<episode>.json ...] heatmap.csv
"""
from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import ExperimentManifest, config_from_flat, dump_config
from .errors import NumericalFailure
from .flatkv import format_flat, parse_flat
from .oracle import empirical_mi, exact_mi, occupancy_metrics
from .persistence import emit_heatmap_data, save_checkpoint
from .trainers import AgentState, TrainConfig, decoder_accuracy, detect_static_collapse, rollout, train

log = logging.getLogger(__name__)

OUT_ENV_VAR = "OPTIONFORGE_OUT"
SUMMARY_KEYS = (
    "mean_r_intrinsic", "disc_loss", "prior_entropy", "empirical_mi",
    "room0_frac", "static_frac", "exact_mi", "decoder_accuracy_greedy",
)


def evaluate(cfg: TrainConfig, agent: AgentState, episodes: int, greedy: bool = False, seed: int = 0):
    """Roll out ``episodes`` evaluation episodes per option from the initial state.

    Returns ``(metrics, trajectories)``.
    """
    env = cfg.env
    rng = np.random.default_rng(seed)
    trajs = [
        rollout(env, agent.policy, w, env.initial_state, cfg.horizon, rng, greedy=greedy)
        for w in range(cfg.n_options)
        for _ in range(episodes)
    ]
    occ = occupancy_metrics(trajs, env)
    metrics = {
        "episodes": len(trajs),
        "greedy": greedy,
        "decoder_accuracy": decoder_accuracy(agent, env, trajs),
        "static_frac": detect_static_collapse(None, trajs),
        "coverage": occ.coverage,
        "empirical_mi": empirical_mi([(t.option, t.final_state) for t in trajs], cfg.n_options, env.n_states),
    }
    if env.n_states <= 2_000:
        metrics["exact_mi"] = exact_mi(env, agent.policy, agent.prior, env.initial_state, cfg.horizon)
    if occ.room_fractions is not None:
        metrics["room0_frac"] = occ.room_fraction(0)
    return metrics, trajs


def _unique_dir(root: Path, name: str) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    candidate = root / f"{name}-{stamp}"
    k = 1
    while candidate.exists():
        candidate = root / f"{name}-{stamp}-{k}"
        k += 1
    candidate.mkdir(parents=True)
    return candidate


def _run_one(args) -> dict:
    label, cfg, run_dir = args
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True)
    (run_dir / "config.cfg").write_text(dump_config(cfg), encoding="utf-8")

    def checkpoint(episode, agent, rng):
        save_checkpoint(run_dir / f"checkpoint-{episode}.json", cfg, agent, episode, rng)

    started = time.perf_counter()
    try:
        runlog = train(cfg, on_checkpoint=checkpoint)
    except NumericalFailure as exc:
        (run_dir / "error.txt").write_text(str(exc) + "\n", encoding="utf-8")
        return {"variant": label, "seed": cfg.seed, "status": "failed", "error": str(exc)}
    (run_dir / "runlog.csv").write_text(runlog.to_csv(), encoding="utf-8")
    (run_dir / "episodes.csv").write_text(runlog.episodes_csv(), encoding="utf-8")
    save_checkpoint(run_dir / "checkpoint.json", cfg, runlog.agent, cfg.episodes)
    _, trajs = evaluate(cfg, runlog.agent, episodes=10, seed=cfg.seed)
    emit_heatmap_data(occupancy_metrics(trajs, cfg.env).state_counts, cfg.env, run_dir / "heatmap.csv")
    metrics = {k: _plain(v) for k, v in runlog.summary.items()}
    (run_dir / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True), encoding="utf-8")
    return {
        "variant": label, "seed": cfg.seed, "status": "ok",
        "seconds": time.perf_counter() - started, "metrics": metrics,
    }


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def _aggregate(results: list[dict]) -> dict:
    out = {}
    ok = [r for r in results if r["status"] == "ok"]
    for key in SUMMARY_KEYS:
        vals = [r["metrics"][key] for r in ok if r["metrics"].get(key) is not None]
        if vals:
            out[key] = {"mean": float(np.mean(vals)), "sd": float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0}
    return out


def run_experiment(manifest: ExperimentManifest, out_root=None, jobs: int | None = None) -> int:
    """Run every (variant, seed) pair; returns 0 on success, 1 if any run failed."""
    root = Path(out_root or os.environ.get(OUT_ENV_VAR) or manifest.output or "runs")
    exp_dir = _unique_dir(root, manifest.name)
    manifest_kv = {"experiment.name": manifest.name, "experiment.seeds": ",".join(map(str, manifest.seeds))}
    for label, kv in manifest.variants.items():
        manifest_kv.update({f"variant.{label}.{k}": v for k, v in kv.items()})
    (exp_dir / "manifest.cfg").write_text(format_flat(manifest_kv), encoding="utf-8")

    tasks = [
        (label, manifest.run_config(label, seed), str(exp_dir / label / f"seed-{seed}"))
        for label in manifest.variants
        for seed in manifest.seeds
    ]
    jobs = jobs or manifest.jobs
    log.info("experiment %s: %d runs -> %s", manifest.name, len(tasks), exp_dir)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, tasks))
    else:
        results = [_run_one(t) for t in tasks]

    summary = {
        "experiment": manifest.name,
        "directory": str(exp_dir),
        "runs": [{k: v for k, v in r.items() if k != "metrics"} for r in results],
        "variants": {
            label: _aggregate([r for r in results if r["variant"] == label])
            for label in manifest.variants
        },
    }
    (exp_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True), encoding="utf-8")
    failed = [r for r in results if r["status"] != "ok"]
    for r in failed:
        log.error("run %s seed %s failed: %s", r["variant"], r["seed"], r["error"])
    return 1 if failed else 0


def load_run_config(run_dir) -> TrainConfig:
    return config_from_flat(parse_flat((Path(run_dir) / "config.cfg").read_text(encoding="utf-8")))
