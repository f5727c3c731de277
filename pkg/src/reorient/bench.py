"""The 24-goal benchmark protocol and its reports.

Every policy/filter pair is scored over all 24 goal orientations, three
pinned torsional-friction values, and a fixed number of repetitions; the
cube size is pinned to nominal and cube-state observation noise is off
while the remaining randomization stays active. Episodes start from the
raster handover pose so goal 3 requires no rotation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import rotations as rot
from .env import EVENT_SUCCESS, HandCubeEnv, PhysicsParams, sample_domain
from .env.episode_log import EpisodeLogger
from .policy import POLICY_DIM, ObservationStack, policy_frame

ETA_SPIN_VALUES = (2e-4, 1e-3, 1e-2)


@dataclass
class BenchmarkSpec:
    eta_spin_values: tuple = ETA_SPIN_VALUES
    runs_per_cell: int = 8
    cube_size: float = 0.08
    goal_time_limit: float = 10.0
    alpha: float = 0.7

    @property
    def n_episodes(self) -> int:
        return 24 * len(self.eta_spin_values) * self.runs_per_cell


@dataclass
class EpisodeRecord:
    goal_index: int
    eta_spin: float
    run: int
    success: bool
    event: str
    steps: int
    time_to_success: float | None

    def to_dict(self):
        return self.__dict__.copy()


@dataclass
class BenchmarkReport:
    episodes: list[EpisodeRecord] = field(default_factory=list)

    @property
    def overall_rate(self) -> float:
        if not self.episodes:
            return 0.0
        return sum(e.success for e in self.episodes) / len(self.episodes)

    def per_goal(self) -> dict[int, float]:
        out = {}
        for g in range(1, 25):
            eps = [e for e in self.episodes if e.goal_index == g]
            out[g] = sum(e.success for e in eps) / len(eps) if eps else 0.0
        return out

    def per_friction(self) -> dict[float, float]:
        out = {}
        for eta in sorted({e.eta_spin for e in self.episodes}):
            eps = [e for e in self.episodes if e.eta_spin == eta]
            out[eta] = sum(e.success for e in eps) / len(eps)
        return out


def wilson_interval(successes: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """95% Wilson score interval; well behaved at the small n used here."""
    if n == 0:
        return (0.0, 1.0)
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def run_episode(
    env: HandCubeEnv,
    policy,
    estimator,
    goal: rot.Rotation,
    domain_overrides: dict,
    max_steps: int,
    torch_gen: torch.Generator,
    logger: EpisodeLogger | None = None,
) -> tuple[bool, str, int, float | None]:
    """One benchmark episode: raster start pose, ends on success, failure,
    or the goal time limit. With an estimator the filter runs in the loop;
    without one the policy consumes noisy simulator states (the protocol
    used to rate the pre-estimator policies)."""
    cfg = sample_domain(env.rng, overrides=domain_overrides)
    env.reset(cfg=cfg, base_rotation=rot.IDENTITY)
    env.set_goal(goal)
    if estimator is not None:
        estimator.reset(env.cube_state())
    if logger is not None:
        logger.header(cfg, goal, extra={"protocol": "benchmark"})

    def policy_pose():
        if estimator is not None:
            e = estimator.estimate()
            return e.x, e.rot, e
        m = env.measured_cube()
        return m.x, m.rot, None

    pstack = ObservationStack(POLICY_DIM)
    px, prot, est = policy_pose()
    pstack.push(policy_frame(env.measured_q(), env.ctrl.q_bar, goal, px, prot))

    for step in range(max_steps):
        obs = torch.as_tensor(pstack.vector(), dtype=torch.float32).unsqueeze(0)
        act = policy.act(obs, deterministic=True, generator=torch_gen)[0].numpy()
        res = env.step(act.astype(np.float64))
        if estimator is not None:
            est = estimator.update(res.info["frames_z"], res.info["frames_u"])
            px, prot = est.x, est.rot
        else:
            m = env.measured_cube()
            px, prot, est = m.x, m.rot, None
        pstack.push(policy_frame(res.info["q_meas"], env.ctrl.q_bar, goal, px, prot))
        if logger is not None:
            logger.step(
                (step + 1) * env.step_period, res.hand.q, env.ctrl.q_bar,
                res.cube_true, act, 0.0, res.event, cube_est=est,
            )
        if res.event == EVENT_SUCCESS:
            return True, res.event, step + 1, (step + 1) * env.step_period
        if res.event in ("dropped", "out_of_bounds", "timeout_goal", "timeout_episode"):
            return False, res.event, step + 1, None
    return False, "timeout_goal", max_steps, None


def run_benchmark(
    policy,
    estimator_factory,
    spec: BenchmarkSpec | None = None,
    seed: int = 0,
    phys: PhysicsParams | None = None,
    out_dir: str | Path | None = None,
    progress=None,
) -> BenchmarkReport:
    """Full protocol: 24 goals x pinned spinning frictions x runs_per_cell.

    Deterministic in `seed`; cells are executed in sorted (goal, eta, run)
    order and each cell derives its own RNG streams from the root seed.
    """
    spec = spec or BenchmarkSpec()
    goals = rot.GoalSet()
    report = BenchmarkReport()
    log_dir = None
    if out_dir is not None:
        log_dir = Path(out_dir) / "episodes"
        log_dir.mkdir(parents=True, exist_ok=True)

    max_steps = int(round(spec.goal_time_limit * 10))
    cell = 0
    for goal_index in range(1, 25):
        for eta in spec.eta_spin_values:
            for run in range(spec.runs_per_cell):
                cell_seed = seed * 1_000_003 + cell
                env = HandCubeEnv(phys=phys, seed=cell_seed, alpha=spec.alpha)
                estimator = None
                overrides = {"eta_spin": eta, "cube_size": spec.cube_size}
                if estimator_factory is not None:
                    estimator = estimator_factory(cell_seed + 500_009)
                    # cube-state observation noise is off when the policy
                    # consumes estimates
                    overrides["sigma_x"] = 0.0
                    overrides["sigma_rot"] = 0.0
                logger = None
                if log_dir is not None:
                    logger = EpisodeLogger(
                        log_dir / f"g{goal_index:02d}_e{eta:.0e}_r{run}.jsonl"
                    )
                gen = torch.Generator().manual_seed(cell_seed + 1)
                try:
                    success, event, steps, tts = run_episode(
                        env, policy, estimator, goals.goal(goal_index),
                        overrides, max_steps, gen, logger,
                    )
                finally:
                    if logger is not None:
                        logger.close()
                report.episodes.append(
                    EpisodeRecord(goal_index, eta, run, success, event, steps, tts)
                )
                cell += 1
                if progress is not None:
                    progress(cell, spec.n_episodes, report)
    if out_dir is not None:
        emit_report(report, out_dir)
    return report


def friction_sweep(
    policy,
    estimator_factory,
    eta_values,
    runs_per_cell: int = 8,
    seed: int = 0,
    phys: PhysicsParams | None = None,
    goal_time_limit: float = 10.0,
) -> list[dict]:
    """Success rate (with 95% Wilson intervals) across torsional friction
    values, over all 24 goals per value."""
    if len(eta_values) < 2:
        raise ValueError("need at least two friction values to sweep")
    rows = []
    for i, eta in enumerate(eta_values):
        spec = BenchmarkSpec(
            eta_spin_values=(float(eta),),
            runs_per_cell=runs_per_cell,
            goal_time_limit=goal_time_limit,
        )
        rep = run_benchmark(policy, estimator_factory, spec, seed=seed + i, phys=phys)
        n = len(rep.episodes)
        s = sum(e.success for e in rep.episodes)
        lo, hi = wilson_interval(s, n)
        rows.append(
            {"eta_spin": float(eta), "successes": s, "episodes": n,
             "rate": s / n, "ci_low": lo, "ci_high": hi}
        )
    return rows


def emit_report(report: BenchmarkReport, out_dir: str | Path) -> dict[str, Path]:
    """CSV per goal and per friction, a JSON summary, and gnuplot-ready
    data files; aggregates are recomputed from the raw episode records."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {}

    raw = out / "episodes.jsonl"
    with raw.open("w") as fh:
        for e in report.episodes:
            fh.write(json.dumps(e.to_dict()) + "\n")
    files["episodes"] = raw

    per_goal = out / "per_goal.csv"
    with per_goal.open("w") as fh:
        fh.write("goal,successes,episodes,rate\n")
        for g in range(1, 25):
            eps = [e for e in report.episodes if e.goal_index == g]
            s = sum(e.success for e in eps)
            rate = s / len(eps) if eps else 0.0
            fh.write(f"{g},{s},{len(eps)},{rate:.6f}\n")
    files["per_goal"] = per_goal

    per_friction = out / "per_friction.csv"
    with per_friction.open("w") as fh:
        fh.write("eta_spin,successes,episodes,rate,ci_low,ci_high\n")
        for eta, rate in report.per_friction().items():
            eps = [e for e in report.episodes if e.eta_spin == eta]
            s = sum(e.success for e in eps)
            lo, hi = wilson_interval(s, len(eps))
            fh.write(f"{eta:.6g},{s},{len(eps)},{rate:.6f},{lo:.6f},{hi:.6f}\n")
    files["per_friction"] = per_friction

    summary = out / "bench.json"
    summary.write_text(
        json.dumps(
            {
                "episodes": len(report.episodes),
                "overall_rate": report.overall_rate,
                "per_goal": report.per_goal(),
                "per_friction": {f"{k:.6g}": v for k, v in report.per_friction().items()},
            },
            indent=2,
        )
    )
    files["summary"] = summary

    for name, rows in (
        ("per_goal.dat", [(g, r) for g, r in report.per_goal().items()]),
        ("per_friction.dat", [(k, v) for k, v in report.per_friction().items()]),
    ):
        p = out / name
        with p.open("w") as fh:
            fh.write("# x rate\n")
            for x, r in rows:
                fh.write(f"{x} {r:.6f}\n")
        files[name] = p
    return files


def load_report(out_dir: str | Path) -> BenchmarkReport:
    """Rebuild a report from the raw episode records."""
    report = BenchmarkReport()
    with (Path(out_dir) / "episodes.jsonl").open() as fh:
        for line in fh:
            d = json.loads(line)
            report.episodes.append(EpisodeRecord(**d))
    return report
