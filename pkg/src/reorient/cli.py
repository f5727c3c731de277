"""Command-line entry points.

    reorient pipeline      --config cfg.yaml [--from-stage s3] [--out runs]
    reorient train-policy  --config cfg.yaml --stage S1|S2|S5 [--resume ckpt] [--filter ckpt]
    reorient train-filter  --stage 1|2|inloop --data dir [--policy ckpt] [--resume ckpt]
    reorient collect       --policy ckpt --frames N --out dir [--seed N]
    reorient bench         --policy ckpt [--filter ckpt] --seed N --out dir
    reorient bench-kernel  [--seconds S]
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np


def _load_cfg(args):
    from .pipeline import PipelineConfig

    cfg = PipelineConfig.from_yaml(args.config) if args.config else PipelineConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def cmd_pipeline(args):
    from .pipeline import run_pipeline

    cfg = _load_cfg(args)
    summary = run_pipeline(cfg, args.out, from_stage=args.from_stage)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_train_policy(args):
    from .pipeline import (
        PipelineConfig,
        load_filter_checkpoint,
        load_policy_checkpoint,
        run_s1,
        run_s2,
        run_s5,
    )

    cfg = _load_cfg(args)
    run_dir = Path(args.out) / cfg.name
    stage = args.stage.lower()
    if stage == "s1":
        out = run_s1(cfg, run_dir)
    elif stage == "s2":
        if not args.resume:
            raise SystemExit("--resume with the S1 checkpoint is required for S2")
        trainer, _ = load_policy_checkpoint(args.resume, cfg.sac)
        out = run_s2(cfg, run_dir, trainer)
    elif stage == "s5":
        if not (args.resume and args.filter):
            raise SystemExit("S5 requires --resume (policy) and --filter (estimator)")
        trainer, _ = load_policy_checkpoint(args.resume, cfg.sac)
        models, _ = load_filter_checkpoint(args.filter)
        out = run_s5(cfg, run_dir, trainer, models)
    else:
        raise SystemExit(f"unknown policy stage {args.stage} (S1, S2 or S5)")
    print(json.dumps({"stage": stage, "bench_rate": out["bench_rate"]}, indent=2))
    return 0


def cmd_train_filter(args):
    import torch

    from .filter import (
        CubeFilter,
        load_dataset,
        train_stage1,
        train_stage2,
        train_inloop,
    )
    from .filter import RunningFilter
    from .pipeline import (
        load_filter_checkpoint,
        load_policy_checkpoint,
        save_filter_checkpoint,
    )
    from .policy import CollectConfig, WorkerPool

    cfg = _load_cfg(args)
    out_dir = Path(args.out)
    ds = load_dataset(args.data)
    train, val = ds.split(0.15, np.random.default_rng(cfg.seed))

    if args.resume:
        models, _ = load_filter_checkpoint(args.resume)
    else:
        models = CubeFilter.create(cfg.filter, seed=cfg.seed)

    if args.stage == "1":
        hist = train_stage1(models, train, val, cfg.filter_train, seed=cfg.seed)
    elif args.stage == "2":
        hist = train_stage2(models, train, val, cfg.filter_train, seed=cfg.seed)
    elif args.stage == "inloop":
        if not args.policy:
            raise SystemExit("in-loop training requires --policy")
        trainer, _ = load_policy_checkpoint(args.policy)

        def pool_factory(current, iteration):
            return WorkerPool(
                cfg.workers,
                seed=cfg.seed + iteration,
                cfg=CollectConfig(reward="simple", state_source="estimator", alpha=0.7),
                reward_cfg=cfg.rewards,
                estimator_factory=lambda i: RunningFilter(
                    current, seed=cfg.seed + 100 * iteration + i
                ),
            )

        hist = train_inloop(
            models, trainer.actor, ds, pool_factory, cfg.filter_train, seed=cfg.seed
        )
    else:
        raise SystemExit(f"unknown filter stage {args.stage} (1, 2 or inloop)")

    save_filter_checkpoint(out_dir / "filter.pt", models, f"filter-{args.stage}")
    print(json.dumps({"stage": args.stage, "history_keys": sorted(hist)}, indent=2))
    return 0


def cmd_collect(args):
    from .filter import collect_sequences, save_dataset
    from .pipeline import load_policy_checkpoint
    from .policy import CollectConfig, WorkerPool

    cfg = _load_cfg(args)
    trainer, _ = load_policy_checkpoint(args.policy)
    pool = WorkerPool(
        cfg.workers,
        seed=cfg.seed,
        cfg=CollectConfig(reward="simple", alpha=0.7),
        reward_cfg=cfg.rewards,
    )
    ds = collect_sequences(
        pool, trainer.actor, args.frames, meta={"source": "offline", "seed": cfg.seed}
    )
    save_dataset(ds, args.out)
    print(json.dumps({"frames": ds.n_frames, "episodes": len(ds.episodes)}))
    return 0


def cmd_bench(args):
    from . import bench as bench_mod
    from .filter import RunningFilter
    from .pipeline import load_filter_checkpoint, load_policy_checkpoint

    trainer, _ = load_policy_checkpoint(args.policy)
    factory = None
    if args.filter:
        models, _ = load_filter_checkpoint(args.filter)
        factory = lambda seed: RunningFilter(models, seed=seed)
    spec = bench_mod.BenchmarkSpec(
        runs_per_cell=args.runs_per_cell, goal_time_limit=args.goal_time_limit
    )
    report = bench_mod.run_benchmark(
        trainer.actor, factory, spec, seed=args.seed, out_dir=args.out,
        progress=lambda k, n, rep: print(
            f"\r{k}/{n} episodes, rate so far {rep.overall_rate:.3f}",
            end="", file=sys.stderr,
        ),
    )
    print(file=sys.stderr)
    print(json.dumps({"episodes": len(report.episodes), "rate": report.overall_rate}))
    return 0


def cmd_bench_kernel(args):
    import importlib

    bench_kernel = importlib.import_module("reorient._bench_kernel")
    bench_kernel.bench(args.seconds)
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s: %(message)s")
    ap = argparse.ArgumentParser(prog="reorient", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("pipeline", help="run the S1-S5 curriculum")
    p.add_argument("--config", required=True)
    p.add_argument("--from-stage", default="s1", choices=["s1", "s2", "s3", "s4", "s5"])
    p.add_argument("--out", default="runs")
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_pipeline)

    p = sub.add_parser("train-policy", help="run one policy stage")
    p.add_argument("--config")
    p.add_argument("--stage", required=True)
    p.add_argument("--resume", help="prior policy checkpoint")
    p.add_argument("--filter", help="filter checkpoint (S5)")
    p.add_argument("--out", default="runs")
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_train_policy)

    p = sub.add_parser("train-filter", help="run one filter training stage")
    p.add_argument("--stage", required=True, choices=["1", "2", "inloop"])
    p.add_argument("--data", required=True, help="sequence dataset directory")
    p.add_argument("--policy", help="policy checkpoint (in-loop stage)")
    p.add_argument("--resume", help="prior filter checkpoint")
    p.add_argument("--config")
    p.add_argument("--out", default="runs/filter")
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_train_filter)

    p = sub.add_parser("collect", help="record a 100 Hz rollout dataset")
    p.add_argument("--policy", required=True)
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_collect)

    p = sub.add_parser("bench", help="run the 24-goal benchmark")
    p.add_argument("--policy", required=True)
    p.add_argument("--filter")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--runs-per-cell", type=int, default=8)
    p.add_argument("--goal-time-limit", type=float, default=10.0)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("bench-kernel", help="compare substep kernel lanes")
    p.add_argument("--seconds", type=float, default=2.0)
    p.set_defaults(fn=cmd_bench_kernel)

    args = ap.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
