"""Data collection: a pool of environment instances stepped as one batch.

Workers are independent env instances with per-worker seeds; the pool does
batched policy inference, computes the stage's reward, maintains the
asymmetric observation stacks, resamples goals on success, and appends
transitions to the replay buffer. With an estimator factory the policy side
consumes filter estimates (estimator-in-the-loop).
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import torch

from .. import rotations as rot
from ..env import (
    EVENT_SUCCESS,
    HandCubeEnv,
    PhysicsParams,
    SimulationDiverged,
    TERMINAL_EVENTS,
    sample_domain,
)
from ..rewards import RewardConfig, reward_estimator, reward_goal, reward_simple
from .observations import ObservationStack, POLICY_DIM, Q_DIM, policy_frame, q_frame
from .replay import ReplayBuffer

log = logging.getLogger(__name__)

EVENT_EST_DIVERGED = "estimator_diverged"  # S5 in-loop termination


@dataclass
class CollectConfig:
    reward: str = "goal"  # goal | simple | estimator
    state_source: str = "noisy_sim"  # noisy_sim | estimator
    alpha: float = 0.5
    domain_overrides: dict = field(default_factory=dict)
    inloop_termination: bool = False
    inloop_pos_limit: float = 0.015
    inloop_rot_limit: float = 0.8
    success_window: int = 100

    def __post_init__(self):
        if self.reward not in ("goal", "simple", "estimator"):
            raise ValueError(f"unknown reward selector {self.reward}")
        if self.state_source not in ("noisy_sim", "estimator"):
            raise ValueError(f"unknown state source {self.state_source}")
        if self.reward == "estimator" and self.state_source != "estimator":
            raise ValueError("estimator reward requires estimator state source")


class _Worker:
    def __init__(self, index: int, env: HandCubeEnv, goal_rng: np.random.Generator):
        self.index = index
        self.env = env
        self.goal_rng = goal_rng
        self.policy_stack = ObservationStack(POLICY_DIM)
        self.q_stack = ObservationStack(Q_DIM)
        self.theta_prev = 0.0
        self.xnorm_prev = 0.0
        self.estimator = None
        self.policy_obs = np.zeros(self.policy_stack.dim)
        self.q_obs = np.zeros(self.q_stack.dim)


class WorkerPool:
    def __init__(
        self,
        n_workers: int,
        seed: int = 0,
        cfg: CollectConfig | None = None,
        reward_cfg: RewardConfig | None = None,
        phys: PhysicsParams | None = None,
        estimator_factory=None,
        gravity_scale: float = 1.0,
    ):
        self.cfg = cfg or CollectConfig()
        self.reward_cfg = reward_cfg or RewardConfig()
        self.gravity_scale = gravity_scale
        self._goals = rot.GoalSet()
        self._torch_gen = torch.Generator().manual_seed(seed)
        if self.cfg.state_source == "estimator" and estimator_factory is None:
            raise ValueError("estimator state source requires an estimator factory")

        self.workers: list[_Worker] = []
        root = np.random.SeedSequence(seed)
        for i, child in enumerate(root.spawn(n_workers)):
            env_seed, goal_seed = child.spawn(2)
            env = HandCubeEnv(
                phys=phys,
                seed=int(env_seed.generate_state(1)[0]),
                alpha=self.cfg.alpha,
            )
            w = _Worker(i, env, np.random.default_rng(goal_seed))
            if estimator_factory is not None:
                w.estimator = estimator_factory(i)
            self.workers.append(w)

        self.steps_collected = 0
        self.episodes = 0
        self._attempts: deque = deque(maxlen=self.cfg.success_window)
        for w in self.workers:
            self._reset_worker(w)

    # ------------------------------------------------------------------

    @property
    def success_rate(self) -> float:
        if not self._attempts:
            return 0.0
        return float(sum(self._attempts)) / len(self._attempts)

    def _sample_goal(self, w: _Worker) -> rot.Rotation:
        return self._goals.goal(int(w.goal_rng.integers(1, 25)))

    def _policy_cube(self, w: _Worker):
        """Cube pose as the policy sees it: estimate, or noisy simulator copy."""
        if self.cfg.state_source == "estimator":
            est = w.estimator.estimate()
            return est.x, est.rot, est
        m = w.env.measured_cube()
        return m.x, m.rot, None

    def _reset_worker(self, w: _Worker) -> None:
        overrides = dict(self.cfg.domain_overrides)
        overrides.setdefault("gravity_scale", self.gravity_scale)
        cfg = sample_domain(w.env.rng, overrides=overrides)
        w.env.alpha = self.cfg.alpha
        w.env.reset(cfg=cfg)
        w.env.set_goal(self._sample_goal(w))
        if w.estimator is not None:
            w.estimator.reset(w.env.cube_state())
        w.policy_stack.reset()
        w.q_stack.reset()
        self._push_frames(w, w.env.measured_q(), w.env.hand_state().q, w.env.cube_state())
        w.theta_prev = w.env.theta()
        w.xnorm_prev = float(np.linalg.norm(w.env.cube_state().x))

    def _push_frames(self, w: _Worker, q_meas, q_true, cube_true) -> None:
        q_bar_prev = w.env.ctrl.q_bar
        px, prot, _ = self._policy_cube(w)
        w.policy_stack.push(policy_frame(q_meas, q_bar_prev, w.env.goal, px, prot))
        w.q_stack.push(q_frame(q_true, q_bar_prev, w.env.goal, cube_true))
        w.policy_obs = w.policy_stack.vector()
        w.q_obs = w.q_stack.vector()

    def _reward(self, w: _Worker, theta, xnorm, cube_true, event, est) -> float:
        rc = self.reward_cfg
        if self.cfg.reward == "goal":
            return reward_goal(theta, cube_true.x, event, rc)
        r_s = reward_simple(theta - w.theta_prev, xnorm - w.xnorm_prev, rc)
        if self.cfg.reward == "simple":
            return r_s
        x_err = float(np.linalg.norm(est.x - cube_true.x))
        phi = rot.distance(est.rot, cube_true.rot)
        return reward_estimator(r_s, x_err, phi, rc)

    # ------------------------------------------------------------------

    def collect(
        self,
        policy,
        replay: ReplayBuffer | None,
        n_steps: int,
        deterministic: bool = False,
        on_step=None,
    ) -> dict:
        """Advance every worker until n_steps total transitions were taken.

        Returns counters; transitions are appended to `replay` when given.
        """
        taken = 0
        n = len(self.workers)
        while taken < n_steps:
            obs = torch.as_tensor(
                np.stack([w.policy_obs for w in self.workers]), dtype=torch.float32
            )
            with torch.no_grad():
                acts = policy.act(obs, deterministic=deterministic, generator=self._torch_gen)
            acts = acts.numpy().astype(np.float64)

            for w, a in zip(self.workers, acts):
                if taken >= n_steps:
                    break
                taken += self._step_worker(w, a, replay, on_step)
        self.steps_collected += taken
        return {
            "steps": taken,
            "episodes": self.episodes,
            "success_rate": self.success_rate,
        }

    def _step_worker(self, w: _Worker, action, replay, on_step) -> int:
        s_policy = w.policy_obs
        s_q = w.q_obs
        try:
            res = w.env.step(action)
        except SimulationDiverged:
            log.warning("worker %d diverged; episode discarded", w.index)
            self._reset_worker(w)
            return 0

        est = None
        event = res.event
        if w.estimator is not None:
            est = w.estimator.update(res.info["frames_z"], res.info["frames_u"])
            if self.cfg.inloop_termination and event not in TERMINAL_EVENTS:
                x_err = float(np.linalg.norm(est.x - res.cube_true.x))
                phi = rot.distance(est.rot, res.cube_true.rot)
                if x_err > self.cfg.inloop_pos_limit or phi > self.cfg.inloop_rot_limit:
                    event = EVENT_EST_DIVERGED

        theta = res.info["theta"]
        xnorm = res.info["x_norm"]
        reward = self._reward(w, theta, xnorm, res.cube_true, event, est)
        terminal = event in TERMINAL_EVENTS or event == EVENT_EST_DIVERGED

        goal_switched = False
        if event == EVENT_SUCCESS:
            self._attempts.append(1)
            w.env.set_goal(self._sample_goal(w))
            goal_switched = True
        elif event != "none":
            self._attempts.append(0)

        self._push_frames(w, res.info["q_meas"], res.hand.q, res.cube_true)
        if replay is not None:
            replay.add(s_policy, s_q, action, reward, terminal, w.policy_obs, w.q_obs)
        if on_step is not None:
            on_step(w.index, res, action, reward, event)

        if event == EVENT_SUCCESS:
            pass  # episode continues with the new goal
        elif event != "none":
            self.episodes += 1
            self._reset_worker(w)
            return 1

        if goal_switched:
            w.theta_prev = w.env.theta()
        else:
            w.theta_prev = theta
        w.xnorm_prev = xnorm
        return 1
