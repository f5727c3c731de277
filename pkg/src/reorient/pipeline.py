"""The five-stage training curriculum.

S1 trains the policy on the dense goal reward with true (noisy) cube states
under a gravity ramp; S2 refines it on the relative-change reward with a
slower lowpass; S3 trains the filter offline on rollouts of that policy;
S4 refines the filter in the loop; S5 fine-tunes the policy on estimated
states with the estimation-error reward while the critics keep seeing the
true simulator state. Each stage emits a checkpoint and a reduced-protocol
benchmark rate, and the pipeline can resume at any stage boundary.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import yaml

from . import bench as bench_mod
from .env import PhysicsParams
from .filter import (
    CubeFilter,
    FilterConfig,
    FilterTrainConfig,
    RunningFilter,
    collect_sequences,
    evaluate_filter,
    load_dataset,
    save_dataset,
    train_inloop,
    train_stage1,
    train_stage2,
)
from .filter.loss import component_errors
from .policy import (
    CollectConfig,
    POLICY_DIM,
    Q_DIM,
    ReplayBuffer,
    SACConfig,
    SACTrainer,
    STACK,
    WorkerPool,
)
from .rewards import RewardConfig

log = logging.getLogger(__name__)

STAGES = ("s1", "s2", "s3", "s4", "s5")

# Table-style stage wiring: reward selector and policy-side state source.
STAGE_WIRING = {
    "s1": {"reward": "goal", "state_source": "noisy_sim", "alpha": 0.5},
    "s2": {"reward": "simple", "state_source": "noisy_sim", "alpha": 0.7},
    "s5": {"reward": "estimator", "state_source": "estimator", "alpha": 0.7},
}

INLOOP_POS_LIMIT = 0.015
INLOOP_ROT_LIMIT = 0.8


def inloop_termination(x_err: float, phi: float) -> bool:
    """Estimator-in-the-loop extra termination: end the episode when the
    estimate is off by more than 1.5 cm or 0.8 rad."""
    return x_err > INLOOP_POS_LIMIT or phi > INLOOP_ROT_LIMIT


@dataclass
class GravitySchedule:
    """Success-gated gravity ramp for S1, with a per-level step budget so
    the scale always reaches 1.0 within the stage."""

    start: float = 0.0
    end: float = 1.0
    step: float = 0.1
    gate: float = 0.4
    patience_steps: int = 5000
    scale: float = field(init=False)
    trace: list = field(default_factory=list)
    _steps_at_level: int = 0

    def __post_init__(self):
        self.scale = self.start
        self.trace.append((0, self.scale))

    def update(self, success_rate: float, steps_done: int, delta_steps: int) -> float:
        if self.scale >= self.end:
            return self.scale
        self._steps_at_level += delta_steps
        if success_rate >= self.gate or self._steps_at_level >= self.patience_steps:
            self.scale = min(self.end, round(self.scale + self.step, 10))
            self._steps_at_level = 0
            self.trace.append((steps_done, self.scale))
        return self.scale


@dataclass
class PipelineConfig:
    name: str = "run"
    seed: int = 0
    workers: int = 8
    replay_capacity: int = 100_000
    collect_chunk: int = 200
    warmup_steps: int = 2000
    sac: SACConfig = field(default_factory=SACConfig)
    rewards: RewardConfig = field(default_factory=RewardConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    filter_train: FilterTrainConfig = field(default_factory=FilterTrainConfig)
    s1_steps: int = 40_000
    s2_steps: int = 30_000
    s5_steps: int = 30_000
    s3_offline_frames: int = 60_000
    gravity_gate: float = 0.4
    gravity_patience: int = 5000
    bench_runs_per_cell: int = 2
    bench_seed: int = 1234
    stage_seeds: dict = field(default_factory=dict)

    @classmethod
    def from_yaml(cls, path: str | Path) -> "PipelineConfig":
        raw = yaml.safe_load(Path(path).read_text()) or {}
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        kw = dict(raw)
        if "sac" in kw:
            kw["sac"] = SACConfig.from_dict(kw["sac"])
        if "rewards" in kw:
            kw["rewards"] = RewardConfig.from_dict(kw["rewards"])
        if "filter" in kw:
            kw["filter"] = FilterConfig.from_dict(kw["filter"])
        if "filter_train" in kw:
            ft = dict(kw["filter_train"])
            kw["filter_train"] = FilterTrainConfig(**ft)
        return cls(**kw)


# ----------------------------------------------------------------------
# checkpoint io


def save_policy_checkpoint(path: Path, trainer: SACTrainer, stage: str, extra=None):
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "version": 1,
        "kind": "policy",
        "stage": stage,
        "sac": trainer.state_dict(),
        "policy_dim": trainer.actor.obs_dim,
        "q_dim": trainer.q1.body[0].in_features - trainer.act_dim,
        "act_dim": trainer.act_dim,
    }
    if extra:
        payload.update(extra)
    torch.save(payload, path)


def load_policy_checkpoint(path: str | Path, cfg: SACConfig | None = None) -> tuple[SACTrainer, dict]:
    """Rebuild a trainer from a checkpoint. The network architecture always
    comes from the checkpoint; a passed cfg only overrides the training
    hyperparameters."""
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("kind") != "policy":
        raise ValueError(f"{path} is not a policy checkpoint")
    saved_cfg = SACConfig.from_dict(payload["sac"]["cfg"])
    if cfg is not None:
        sac_cfg = SACConfig.from_dict({**cfg.to_dict(), "hidden": saved_cfg.hidden})
    else:
        sac_cfg = saved_cfg
    trainer = SACTrainer(
        payload["policy_dim"], payload["q_dim"],
        act_dim=payload.get("act_dim", 12), cfg=sac_cfg,
    )
    trainer.load_state_dict(payload["sac"])
    return trainer, payload


def save_filter_checkpoint(path: Path, models: CubeFilter, stage: str, extra=None):
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"version": 1, "kind": "filter", "stage": stage, "filter": models.state_dict()}
    if extra:
        payload.update(extra)
    torch.save(payload, path)


def load_filter_checkpoint(path: str | Path) -> tuple[CubeFilter, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("kind") != "filter":
        raise ValueError(f"{path} is not a filter checkpoint")
    cfg = FilterConfig.from_dict(payload["filter"]["cfg"])
    models = CubeFilter.create(cfg)
    models.load_state_dict(payload["filter"])
    return models, payload


# ----------------------------------------------------------------------
# policy training loop shared by S1, S2, S5


def train_policy_stage(
    trainer: SACTrainer,
    pool: WorkerPool,
    replay: ReplayBuffer,
    steps: int,
    cfg: PipelineConfig,
    curves_path: Path | None = None,
    gravity: GravitySchedule | None = None,
    seed: int = 0,
) -> dict:
    rng = np.random.default_rng(seed)
    writer = None
    fh = None
    if curves_path is not None:
        curves_path.parent.mkdir(parents=True, exist_ok=True)
        fh = curves_path.open("w", newline="")
        writer = csv.writer(fh)
        writer.writerow(
            ["step", "success_rate", "critic_loss", "actor_loss", "alpha", "gravity"]
        )
    collected = 0
    diag = {}
    t0 = time.time()
    try:
        while collected < steps:
            chunk = min(cfg.collect_chunk, steps - collected)
            pool.collect(trainer.actor, replay, chunk)
            collected += chunk
            if gravity is not None:
                pool.gravity_scale = gravity.update(pool.success_rate, collected, chunk)
            if len(replay) >= cfg.warmup_steps:
                n_updates = max(1, int(round(chunk * trainer.cfg.updates_per_step)))
                for _ in range(n_updates):
                    diag = trainer.update(replay.sample(trainer.cfg.batch_size, rng))
            if writer is not None:
                writer.writerow(
                    [
                        collected,
                        f"{pool.success_rate:.4f}",
                        f"{diag.get('critic_loss', float('nan')):.5f}",
                        f"{diag.get('actor_loss', float('nan')):.5f}",
                        f"{diag.get('alpha', float('nan')):.5f}",
                        f"{pool.gravity_scale:.2f}" if gravity is not None else "1.00",
                    ]
                )
            if collected % max(cfg.collect_chunk * 10, 1) == 0:
                log.info(
                    "stage progress %d/%d steps, success %.3f, %.0f steps/s",
                    collected, steps, pool.success_rate,
                    collected / max(time.time() - t0, 1e-9),
                )
    finally:
        if fh is not None:
            fh.close()
    return {"steps": collected, "success_rate": pool.success_rate}


def stage_benchmark(
    policy,
    models: CubeFilter | None,
    cfg: PipelineConfig,
    out_dir: Path,
    runs_per_cell: int | None = None,
) -> float:
    """Reduced-protocol benchmark at a stage boundary. Without filter
    models the policy consumes noisy simulator states (the pre-estimator
    stages); with them the filter runs in the loop."""
    spec = bench_mod.BenchmarkSpec(
        runs_per_cell=runs_per_cell or cfg.bench_runs_per_cell
    )
    factory = None
    if models is not None:
        factory = lambda seed: RunningFilter(models, seed=seed)
    report = bench_mod.run_benchmark(
        policy, factory, spec, seed=cfg.bench_seed, out_dir=out_dir
    )
    return report.overall_rate


# ----------------------------------------------------------------------
# stages


def _pool(cfg: PipelineConfig, stage: str, estimator_factory=None, gravity_scale=1.0):
    wiring = STAGE_WIRING[stage]
    collect_cfg = CollectConfig(
        reward=wiring["reward"],
        state_source=wiring["state_source"],
        alpha=wiring["alpha"],
        inloop_termination=(stage == "s5"),
        inloop_pos_limit=INLOOP_POS_LIMIT,
        inloop_rot_limit=INLOOP_ROT_LIMIT,
    )
    seed = cfg.stage_seeds.get(stage, cfg.seed + STAGES.index(stage))
    return WorkerPool(
        cfg.workers,
        seed=seed,
        cfg=collect_cfg,
        reward_cfg=cfg.rewards,
        estimator_factory=estimator_factory,
        gravity_scale=gravity_scale,
    )


def run_s1(cfg: PipelineConfig, run_dir: Path) -> dict:
    stage_dir = run_dir / "s1"
    trainer = SACTrainer(
        POLICY_DIM * STACK, Q_DIM * STACK, cfg=cfg.sac, seed=cfg.seed
    )
    replay = ReplayBuffer(cfg.replay_capacity, POLICY_DIM * STACK, Q_DIM * STACK)
    gravity = GravitySchedule(gate=cfg.gravity_gate, patience_steps=cfg.gravity_patience)
    pool = _pool(cfg, "s1", gravity_scale=gravity.scale)
    train_policy_stage(
        trainer, pool, replay, cfg.s1_steps, cfg,
        curves_path=stage_dir / "logs" / "curves.csv",
        gravity=gravity, seed=cfg.seed + 11,
    )
    if gravity.scale < 1.0:
        raise RuntimeError("gravity curriculum did not reach full scale in S1")
    rate = stage_benchmark(trainer.actor, None, cfg, stage_dir / "bench")
    save_policy_checkpoint(
        stage_dir / "checkpoints" / "policy.pt", trainer, "s1",
        extra={"bench_rate": rate, "gravity_trace": gravity.trace},
    )
    (stage_dir / "stage.json").write_text(json.dumps({"bench_rate": rate}))
    return {"trainer": trainer, "bench_rate": rate}


def _refine_policy(cfg, run_dir, stage, trainer, steps, estimator_factory=None):
    stage_dir = run_dir / stage
    # fresh replay, same weights and optimizer state
    replay = ReplayBuffer(cfg.replay_capacity, POLICY_DIM * STACK, Q_DIM * STACK)
    pool = _pool(cfg, stage, estimator_factory=estimator_factory)
    train_policy_stage(
        trainer, pool, replay, steps, cfg,
        curves_path=stage_dir / "logs" / "curves.csv",
        seed=cfg.seed + 13 + STAGES.index(stage),
    )
    return stage_dir, replay


def run_s2(cfg: PipelineConfig, run_dir: Path, trainer: SACTrainer) -> dict:
    stage_dir, _ = _refine_policy(cfg, run_dir, "s2", trainer, cfg.s2_steps)
    rate = stage_benchmark(trainer.actor, None, cfg, stage_dir / "bench")
    save_policy_checkpoint(
        stage_dir / "checkpoints" / "policy.pt", trainer, "s2", extra={"bench_rate": rate}
    )
    (stage_dir / "stage.json").write_text(json.dumps({"bench_rate": rate}))
    return {"trainer": trainer, "bench_rate": rate}


def run_s3(cfg: PipelineConfig, run_dir: Path, trainer: SACTrainer) -> dict:
    """Collect the offline dataset from the S2 policy and train the filter
    through stages 1 and 2."""
    stage_dir = run_dir / "s3"
    data_dir = stage_dir / "data"
    seed = cfg.stage_seeds.get("s3", cfg.seed + 2)

    if (data_dir / "meta.json").exists():
        offline = load_dataset(data_dir)
    else:
        pool = _pool(cfg, "s2")  # rollout conditions of the data policy
        offline = collect_sequences(
            pool, trainer.actor, cfg.s3_offline_frames, meta={"source": "offline"}
        )
        save_dataset(offline, data_dir)

    models = CubeFilter.create(cfg.filter, seed=seed)
    train, val = offline.split(0.15, np.random.default_rng(seed))
    h1 = train_stage1(models, train, val, cfg.filter_train, seed=seed)
    from .filter import evaluate_stage1, identity_baseline_loss

    stage1_eval = evaluate_stage1(models, val)
    identity_eval = identity_baseline_loss(val)
    h2 = train_stage2(models, train, val, cfg.filter_train, seed=seed + 1)
    stage2_eval = evaluate_filter(models, val, cfg.filter_train, seed=777)
    rate = stage_benchmark(trainer.actor, models, cfg, stage_dir / "bench")
    meta = {
        "bench_rate": rate,
        "stage1_epochs": len(h1["val"]),
        "stage1_eval": stage1_eval,
        "identity_baseline": identity_eval,
        # h2["val"][0] is the stage-1 filter's rollout loss on the fixed
        # validation windows; the restored model scores min(h2["val"]).
        "stage2_val_history": h2["val"],
        "stage2_eval": stage2_eval,
    }
    save_filter_checkpoint(stage_dir / "checkpoints" / "filter.pt", models, "s3", extra=meta)
    (stage_dir / "stage.json").write_text(json.dumps(meta))
    return {"models": models, "offline": offline, "bench_rate": rate}


def inloop_eval(
    trainer, models, cfg: PipelineConfig, n_episodes: int = 24, seed: int = 4242
) -> dict:
    """Median cube-pose prediction error over fixed in-loop rollouts; common
    random numbers across filter iterations make the comparison paired."""
    import torch as _t

    pos_errs, rot_errs = [], []
    from . import rotations as rot
    from .env import HandCubeEnv, sample_domain
    from .policy import ObservationStack, policy_frame

    goals = rot.GoalSet()
    for e in range(n_episodes):
        env = HandCubeEnv(seed=seed + e, alpha=0.7)
        env.reset(cfg=sample_domain(env.rng))
        env.set_goal(goals.goal(1 + e % 24))
        rf = RunningFilter(models, seed=seed + 1000 + e)
        rf.reset(env.cube_state())
        stack = ObservationStack(POLICY_DIM)
        est = rf.estimate()
        stack.push(policy_frame(env.measured_q(), env.ctrl.q_bar, env.goal, est.x, est.rot))
        gen = _t.Generator().manual_seed(seed + 2000 + e)
        for step in range(50):  # 5 s
            obs = _t.as_tensor(stack.vector(), dtype=_t.float32).unsqueeze(0)
            act = trainer.actor.act(obs, deterministic=True, generator=gen)[0].numpy()
            res = env.step(act.astype(np.float64))
            est = rf.update(res.info["frames_z"], res.info["frames_u"])
            stack.push(
                policy_frame(res.info["q_meas"], env.ctrl.q_bar, env.goal, est.x, est.rot)
            )
            pos_errs.append(float(np.linalg.norm(est.x - res.cube_true.x)))
            rot_errs.append(rot.distance(est.rot, res.cube_true.rot))
            if res.event in ("dropped", "out_of_bounds"):
                break
    return {
        "pos_err_median": float(np.median(pos_errs)),
        "rot_err_median": float(np.median(rot_errs)),
    }


def run_s4(cfg: PipelineConfig, run_dir: Path, trainer: SACTrainer, models, offline) -> dict:
    stage_dir = run_dir / "s4"
    seed = cfg.stage_seeds.get("s4", cfg.seed + 3)

    def pool_factory(current_models, iteration):
        factory = lambda i: RunningFilter(
            current_models, seed=seed + 100 * iteration + i
        )
        # S4 collection: the data policy consumes estimates, simple reward
        collect_cfg = CollectConfig(
            reward="simple", state_source="estimator", alpha=0.7
        )
        return WorkerPool(
            cfg.workers, seed=seed + iteration, cfg=collect_cfg,
            reward_cfg=cfg.rewards, estimator_factory=factory,
        )

    def eval_fn(current_models, iteration):
        return inloop_eval(trainer, current_models, cfg, seed=cfg.seed + 777)

    history = train_inloop(
        models, trainer.actor, offline,
        pool_factory=pool_factory, cfg=cfg.filter_train, seed=seed, eval_fn=eval_fn,
    )
    rate = stage_benchmark(trainer.actor, models, cfg, stage_dir / "bench")
    save_filter_checkpoint(
        stage_dir / "checkpoints" / "filter.pt", models, "s4",
        extra={"bench_rate": rate, "inloop_history": history},
    )
    (stage_dir / "stage.json").write_text(
        json.dumps(
            {
                "bench_rate": rate,
                "eval": history["eval"],
                "inloop_frames": history["inloop_frames"],
                "offline_frames": history["offline_frames"],
                "iterations": history["iterations"],
            }
        )
    )
    return {"models": models, "bench_rate": rate, "history": history}


def run_s5(cfg: PipelineConfig, run_dir: Path, trainer: SACTrainer, models) -> dict:
    seed = cfg.stage_seeds.get("s5", cfg.seed + 4)
    factory = lambda i: RunningFilter(models, seed=seed + 31 * i)
    stage_dir, _ = _refine_policy(
        cfg, run_dir, "s5", trainer, cfg.s5_steps, estimator_factory=factory
    )
    rate = stage_benchmark(trainer.actor, models, cfg, stage_dir / "bench")
    save_policy_checkpoint(
        stage_dir / "checkpoints" / "policy.pt", trainer, "s5", extra={"bench_rate": rate}
    )
    (stage_dir / "stage.json").write_text(json.dumps({"bench_rate": rate}))
    return {"trainer": trainer, "bench_rate": rate}


# ----------------------------------------------------------------------


def run_pipeline(
    cfg: PipelineConfig, run_root: str | Path, from_stage: str = "s1"
) -> dict:
    """Execute S1..S5 in order, reusing stage artifacts before from_stage.

    Paper-scale reference rates for the analogous sequence are recorded in
    the summary as targets for direction only, never asserted.
    """
    if from_stage not in STAGES:
        raise ValueError(f"unknown stage {from_stage}")
    run_dir = Path(run_root) / cfg.name
    run_dir.mkdir(parents=True, exist_ok=True)
    start = STAGES.index(from_stage)

    trainer = None
    models = None
    offline = None
    rates: dict[str, float] = {}

    def need(stage, path, what):
        if not path.exists():
            raise FileNotFoundError(
                f"resuming at {from_stage} requires the {what} from {stage} at {path}"
            )
        return path

    if start > 0:
        prior = "s2" if start >= 2 else "s1"
        p = need(prior, run_dir / prior / "checkpoints" / "policy.pt", "policy checkpoint")
        trainer, payload = load_policy_checkpoint(p, cfg.sac)
        rates.update({prior: payload.get("bench_rate")})
    if start > 2:
        p = need("s3", run_dir / "s3" / "checkpoints" / "filter.pt", "filter checkpoint")
        models, payload = load_filter_checkpoint(p)
        rates.update({"s3": payload.get("bench_rate")})
        offline = load_dataset(run_dir / "s3" / "data")
    if start > 3:
        p = need("s4", run_dir / "s4" / "checkpoints" / "filter.pt", "filter checkpoint")
        models, payload = load_filter_checkpoint(p)
        rates.update({"s4": payload.get("bench_rate")})

    if start <= 0:
        out = run_s1(cfg, run_dir)
        trainer = out["trainer"]
        rates["s1"] = out["bench_rate"]
    if start <= 1:
        out = run_s2(cfg, run_dir, trainer)
        rates["s2"] = out["bench_rate"]
    if start <= 2:
        out = run_s3(cfg, run_dir, trainer)
        models = out["models"]
        offline = out["offline"]
        rates["s3"] = out["bench_rate"]
    if start <= 3:
        if offline is None:
            offline = load_dataset(run_dir / "s3" / "data")
        out = run_s4(cfg, run_dir, trainer, models, offline)
        rates["s4"] = out["bench_rate"]
    out = run_s5(cfg, run_dir, trainer, models)
    rates["s5"] = out["bench_rate"]

    summary = {
        "rates": rates,
        "paper_scale_reference_rates": {
            "s1": 0.68, "s2": 0.99, "s3": 0.74, "s4": 0.76, "s5": 0.92,
        },
    }
    (run_dir / "summary.json").write_text(json.dumps(summary, indent=2))
    return summary
