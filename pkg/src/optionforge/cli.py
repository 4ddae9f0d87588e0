"""Command line entry point.

    optionforge run <manifest> [--jobs J] [--out DIR]
    optionforge eval <checkpoint> --episodes K [--greedy] [--seed S]
    optionforge oracle mi <config-or-checkpoint>
    optionforge oracle capacity <config-or-checkpoint> [--tolerance T]
    optionforge report <run-dir>

Exit codes: 0 success, 1 a run diverged numerically, 2 invalid input.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .config import load_config, load_manifest
from .errors import ContractViolation, InvalidSpecError, NumericalFailure
from .harness import evaluate, run_experiment
from .oracle import exact_joint, mi_decompositions, optimal_prior
from .persistence import load_checkpoint
from .trainers import RunLog, build_agent


def _load_agent(path: str, logit_scale: float, seed: int):
    """A checkpoint gives the learned agent; a config gives random-logit policies."""
    if path.endswith(".json"):
        ckpt = load_checkpoint(path)
        return ckpt.config, ckpt.agent
    cfg = load_config(path)
    agent = build_agent(cfg)
    if logit_scale > 0:
        rng = np.random.default_rng(seed)
        agent.policy.logits[:] = rng.normal(0.0, logit_scale, size=agent.policy.logits.shape)
    return cfg, agent


def _cmd_run(args) -> int:
    manifest = load_manifest(args.manifest)
    return run_experiment(manifest, out_root=args.out, jobs=args.jobs)


def _cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    metrics, _ = evaluate(ckpt.config, ckpt.agent, args.episodes, greedy=args.greedy, seed=args.seed)
    metrics["checkpoint_episode"] = ckpt.episode
    print(json.dumps({k: _jsonable(v) for k, v in metrics.items()}, indent=2, sort_keys=True))
    return 0


def _cmd_oracle(args) -> int:
    cfg, agent = _load_agent(args.source, args.logit_scale, args.seed)
    s0 = cfg.env.initial_state
    if args.quantity == "mi":
        joint = exact_joint(cfg.env, agent.policy, agent.prior, s0, cfg.horizon)
        a, b = mi_decompositions(joint)
        out = {"s0": s0, "horizon": cfg.horizon, "mi_final_state_form": a, "mi_option_form": b,
               "upper_bound": min(math.log(cfg.n_options), math.log(cfg.env.n_states))}
    else:
        prior, capacity = optimal_prior(cfg.env, agent.policy, s0, cfg.horizon, args.tolerance)
        out = {"s0": s0, "horizon": cfg.horizon, "capacity": capacity,
               "optimal_prior": prior.probabilities(s0).tolist()}
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def _cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    summary = run_dir / "summary.json"
    if summary.exists():
        data = json.loads(summary.read_text(encoding="utf-8"))
        print(f"experiment {data['experiment']}  ({len(data['runs'])} runs)")
        for label, agg in sorted(data["variants"].items()):
            print(f"[{label}]")
            for key, stat in sorted(agg.items()):
                print(f"  {key:<24} {stat['mean']:.4f} +/- {stat['sd']:.4f}")
        failed = [r for r in data["runs"] if r["status"] != "ok"]
        for r in failed:
            print(f"FAILED {r['variant']} seed {r['seed']}: {r.get('error', '')}")
        return 1 if failed else 0
    runlog = run_dir / "runlog.csv"
    if not runlog.exists():
        raise InvalidSpecError(f"{run_dir} holds neither summary.json nor runlog.csv")
    records = RunLog.records_from_csv(runlog.read_text(encoding="utf-8"))
    print(f"{'episode':>8} {'reward':>9} {'loss':>9} {'H(prior)':>9} {'MI':>9} {'room0':>7} {'static':>7}")
    for rec in records:
        cells = [rec["episode"]] + [rec[c] for c in
                 ("mean_r_intrinsic", "disc_loss", "prior_entropy", "empirical_mi", "room0_frac", "static_frac")]
        print(f"{cells[0]:>8} " + " ".join(
            f"{'-':>9}" if v is None else f"{v:>9.4f}" for v in cells[1:]))
    return 0


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="optionforge", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run every variant x seed of a manifest")
    p.add_argument("manifest")
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--out", default=None, help="output root (else $OPTIONFORGE_OUT, else ./runs)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--episodes", type=int, default=10, help="episodes per option")
    p.add_argument("--greedy", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("oracle", help="exact information quantities")
    p.add_argument("quantity", choices=("mi", "capacity"))
    p.add_argument("source", help="config file, or checkpoint .json")
    p.add_argument("--logit-scale", type=float, default=1.0,
                   help="std of random policy logits when SOURCE is a config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-8)
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("report", help="print a run or experiment directory")
    p.add_argument("run_dir")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InvalidSpecError, ContractViolation, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
