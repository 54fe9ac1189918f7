"""Command-line entry points: train, eval, ablate, serve."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import autodiff as ad
from .baselines import POLICY_NAMES, load_score_table, make_policy
from .checkpoint import load_checkpoint, save_checkpoint
from .config import model_config_from, parse_config, parse_inline, task_spec_from, train_config_from
from .episodes import SyntheticRatingsWorld, load_embedding_table
from .errors import ConfigurationError, NumericFault
from .model import init_params
from .optim import AdamState
from .training import evaluate, imitation_pretrain, train

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _episode_source(spec):
    if spec.kind == "regression" and spec.source == "synthetic":
        return SyntheticRatingsWorld.create(spec, spec.seed)
    return None


def cmd_train(args):
    try:
        conf = parse_config(args.config)
        spec = task_spec_from(conf)
        mcfg = model_config_from(conf, spec)
        tcfg = train_config_from(conf)
    except (ConfigurationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    ad.set_default_dtype(mcfg.dtype)
    rng = np.random.default_rng(tcfg.seed)
    pretrained = None
    if conf.get("model.pretrained_embeddings"):
        pretrained = load_embedding_table(conf["model.pretrained_embeddings"])
    store = init_params(mcfg, rng, pretrained_embeddings=pretrained)
    source = _episode_source(spec)
    metrics_path = conf.get("out.metrics", "metrics.jsonl")
    ckpt_path = conf.get("out.checkpoint", "model.ckpt")
    data_dir = os.environ.get("ALMETA_DATA_DIR")
    if data_dir:
        metrics_path = os.path.join(data_dir, metrics_path)
        ckpt_path = os.path.join(data_dir, ckpt_path)
    try:
        if tcfg.imitation_steps > 0:
            from .baselines import select_balanced_oracle

            def oracle(partition, episode, orng):
                labels = [it.label for it in episode.support]
                return select_balanced_oracle(partition, labels, orng)

            imitation_pretrain(store, mcfg, tcfg, spec, oracle, tcfg.imitation_steps, rng, source=source)
        if tcfg.max_updates == 0:
            save_checkpoint(ckpt_path, store, mcfg, AdamState(lr=tcfg.learning_rate))
            open(metrics_path, "w").close()
        else:
            train(
                store, mcfg, tcfg, spec,
                source=source,
                metrics_path=metrics_path,
                checkpoint_path=ckpt_path,
                progress=lambda rec: print(
                    f"update {rec['update']}: loss={rec['loss']:.4f} "
                    f"slow={rec['slow_reward']:.4f} fast={rec['fast_reward']:.4f}"
                )
                if args.verbose
                else None,
            )
    except NumericFault as exc:
        print(f"numeric fault: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


def _load_task(text):
    if os.path.exists(text):
        return task_spec_from(parse_config(text))
    return task_spec_from(parse_inline(text), prefix="")


def cmd_eval(args):
    try:
        store, mcfg, _, _ = load_checkpoint(args.ckpt)
        spec = _load_task(args.task)
        if args.policy not in POLICY_NAMES:
            raise ConfigurationError(f"policy must be one of {POLICY_NAMES}")
        scores = load_score_table(args.scores) if args.scores else None
        selection = make_policy(args.policy, scores=scores)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if mcfg.task != spec.kind or (
        spec.kind == "classification" and mcfg.n_classes != spec.n_classes
    ):
        print("error: checkpoint dimensions incompatible with the task", file=sys.stderr)
        return EXIT_CONFIG
    source = _episode_source(spec)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [args.seed]
    runs = [
        evaluate(store, mcfg, spec, args.episodes, seed, selection_fn=selection, source=source)
        for seed in seeds
    ]
    slow = np.stack([r["slow_mean"] for r in runs])
    report = {
        "policy": args.policy,
        "episodes": args.episodes,
        "seeds": seeds,
        "slow_mean": slow.mean(axis=0).tolist(),
        "slow_stderr": np.stack([r["slow_stderr"] for r in runs]).mean(axis=0).tolist(),
        "fast_mean": np.stack([r["fast_mean"] for r in runs]).mean(axis=0).tolist(),
        "unique_mean": np.stack([r["unique_mean"] for r in runs]).mean(axis=0).tolist(),
    }
    metric = "accuracy" if mcfg.task == "classification" else "rmse"
    for t, (m, se) in enumerate(zip(report["slow_mean"], report["slow_stderr"]), start=1):
        print(f"t={t}: {metric}={m:.4f} +/- {se:.4f}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report, fh, indent=2)
    return 0


def cmd_ablate(args):
    try:
        store, mcfg, _, _ = load_checkpoint(args.ckpt)
        spec = _load_task(args.task)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    source = _episode_source(spec)
    base = evaluate(store, mcfg, spec, args.episodes, args.seed, source=source)
    ablate = {
        "gamma": {"gamma_one": True},
        "ctx_encoder": {"no_ctx": True},
        "matching_steps": {"match_steps": 1},
    }[args.component]
    ablated = evaluate(store, mcfg, spec, args.episodes, args.seed, source=source, ablate=ablate)
    key = "fast_mean" if args.component == "gamma" else "slow_mean"
    b = float(np.nanmean(base[key]))
    a = float(np.nanmean(ablated[key]))
    print(f"component={args.component} baseline={b:.4f} ablated={a:.4f} delta={b - a:+.4f}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"component": args.component, "baseline": b, "ablated": a}, fh)
    return 0


def cmd_serve(args):
    import uvicorn

    from .service import create_app

    store, mcfg, _, _ = load_checkpoint(args.ckpt)
    spec = _load_task(args.task) if args.task else None
    source = _episode_source(spec) if spec else None
    port = int(os.environ.get("ALMETA_PORT", args.port))
    uvicorn.run(create_app(store, mcfg, source=source), host=args.host, port=port, log_level="warning")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="almeta", description="meta active learning engine")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint with some selection policy")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--task", required=True, help="task config file or inline k=v,k=v")
    p.add_argument("--policy", default="active")
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", default=None, help="comma-separated seed list")
    p.add_argument("--scores", default=None, help="a-priori score table (popular_entropy)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="measure the effect of disabling one component")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--task", required=True)
    p.add_argument("--component", required=True, choices=["gamma", "ctx_encoder", "matching_steps"])
    p.add_argument("--episodes", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("serve", help="run the HTTP session service")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--task", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
