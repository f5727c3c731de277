import numpy as np
import pytest
import torch

from reorient import rotations as rot
from reorient.policy import (
    CollectConfig,
    POLICY_DIM,
    Q_DIM,
    ReplayBuffer,
    STACK,
    WorkerPool,
)


class SqueezePolicy:
    """Constant gentle squeeze: holds the grasp, no learning involved."""

    def __init__(self, value=0.25):
        self.value = value

    def act(self, obs, deterministic=False, generator=None):
        a = torch.zeros(obs.shape[0], 12)
        a[:, 2::3] = self.value
        return a


def make_pool(n_workers=2, seed=0, **cfg_kw):
    cfg = CollectConfig(**cfg_kw)
    return WorkerPool(n_workers, seed=seed, cfg=cfg)


def make_replay(capacity=4096):
    return ReplayBuffer(capacity, POLICY_DIM * STACK, Q_DIM * STACK)


class TestCollect:
    def test_step_bookkeeping(self):
        pool = make_pool(2, seed=0)
        replay = make_replay()
        stats = pool.collect(SqueezePolicy(), replay, 200)
        assert stats["steps"] == 200
        assert len(replay) == 200

    def test_success_transition_flag_and_goal_resample(self):
        pool = make_pool(1, seed=1)
        replay = make_replay()
        w = pool.workers[0]
        # pin the goal onto the current orientation: success after the 4-step hold
        w.env.set_goal(w.env.cube_state().rot)
        w.theta_prev = w.env.theta()
        events = []
        pool.collect(
            SqueezePolicy(), replay, 12,
            on_step=lambda i, res, a, r, ev: events.append(ev),
        )
        assert "success" in events
        k = events.index("success")
        assert replay.terminal[k] == 1.0
        # episode continued: no reset happened at the success step
        assert pool.episodes == 0
        # the frame stored after success carries a different goal
        goal_before = replay.policy_obs[k, -POLICY_DIM:][36:40]
        goal_after = replay.next_policy_obs[k, -POLICY_DIM:][36:40]
        assert not np.allclose(goal_before, goal_after)

    def test_timeout_stored_without_termination_signal(self):
        pool = make_pool(1, seed=2)
        replay = make_replay(16384)
        events = []
        pool.collect(
            SqueezePolicy(), replay, 100,
            on_step=lambda i, res, a, r, ev: events.append(ev),
        )
        assert events[-1] == "timeout_goal" or "timeout_goal" in events
        k = events.index("timeout_goal")
        assert replay.terminal[k] == 0.0
        assert pool.episodes >= 1  # timeout still resets the environment

    def test_drop_is_terminal_and_resets(self):
        pool = make_pool(1, seed=3)
        replay = make_replay()

        class OpenPolicy:
            def act(self, obs, deterministic=False, generator=None):
                return -torch.ones(obs.shape[0], 12)

        events = []
        pool.collect(OpenPolicy(), replay, 30,
                     on_step=lambda i, res, a, r, ev: events.append(ev))
        assert "dropped" in events
        k = events.index("dropped")
        assert replay.terminal[k] == 1.0
        assert pool.episodes >= 1

    def test_q_observations_true_policy_observations_noisy(self):
        pool = make_pool(1, seed=4)
        replay = make_replay()
        truths = []
        pool.collect(
            SqueezePolicy(), replay, 5,
            on_step=lambda i, res, a, r, ev: truths.append(
                (res.hand.q.copy(), res.cube_true.x.copy(), res.cube_true.v.copy())
            ),
        )
        for k in range(5):
            frame_q = replay.next_q_obs[k, -Q_DIM:]
            q_true, x_true, v_true = truths[k]
            np.testing.assert_allclose(frame_q[0:12], q_true, atol=1e-6)
            np.testing.assert_allclose(frame_q[40:43], x_true, atol=1e-6)
            np.testing.assert_allclose(frame_q[51:54], v_true, atol=1e-6)
            frame_p = replay.next_policy_obs[k, -POLICY_DIM:]
            assert not np.allclose(frame_p[0:12], q_true, atol=1e-6)  # offset+noise
            assert not np.allclose(frame_p[40:43], x_true, atol=1e-6)

    def test_simple_reward_telescopes_on_logged_episode(self):
        from reorient.rewards import RewardConfig

        pool = make_pool(1, seed=5, reward="simple")
        rc = pool.reward_cfg
        w = pool.workers[0]
        theta0 = w.env.theta()
        x0 = float(np.linalg.norm(w.env.cube_state().x))
        rewards = []
        thetas = [theta0]
        xnorms = [x0]
        events = []

        def record(i, res, a, r, ev):
            rewards.append(r)
            thetas.append(res.info["theta"])
            xnorms.append(res.info["x_norm"])
            events.append(ev)

        pool.collect(SqueezePolicy(0.15), None, 40, on_step=record)
        # stop at the first non-none event; verify the telescoped sum up to there
        n = events.index("timeout_goal") if "timeout_goal" in events else len(events)
        n = min(n, len(events))
        unclipped = all(
            -rc.lambda_theta_s * (thetas[t + 1] - thetas[t]) < rc.lambda_clip_s
            for t in range(n)
        )
        if unclipped and n > 0:
            expect = rc.lambda_theta_s * (thetas[0] - thetas[n]) + rc.lambda_pos_s * (
                xnorms[0] - xnorms[n]
            )
            assert sum(rewards[:n]) == pytest.approx(expect, abs=1e-9)

    def test_estimator_source_requires_factory(self):
        with pytest.raises(ValueError):
            WorkerPool(1, seed=0, cfg=CollectConfig(state_source="estimator"))

    def test_estimator_mode_feeds_estimates_and_terminates_on_divergence(self):
        from reorient.env.environment import CubeState

        class DriftingEstimator:
            """Estimate = pose at reset plus a drift growing 2 mm per step."""

            def reset(self, cube):
                self.k = 0
                self.base = cube

            def update(self, frames_z, frames_u):
                self.k += 1
                return self.estimate()

            def estimate(self):
                off = np.array([0.002 * self.k, 0.0, 0.0])
                b = self.base
                return CubeState(b.x + off, b.rot, b.v, b.w)

        cfg = CollectConfig(
            reward="estimator", state_source="estimator", inloop_termination=True
        )
        pool = WorkerPool(1, seed=6, cfg=cfg, estimator_factory=lambda i: DriftingEstimator())
        replay = make_replay()
        events = []
        pool.collect(SqueezePolicy(), replay, 20,
                     on_step=lambda i, res, a, r, ev: events.append(ev))
        # drift passes 1.5 cm at step 8: in-loop termination fires
        assert "estimator_diverged" in events
        k = events.index("estimator_diverged")
        assert replay.terminal[k] == 1.0
        assert k <= 9

    def test_deterministic_collection(self):
        outs = []
        for _ in range(2):
            pool = make_pool(2, seed=7)
            replay = make_replay()
            pool.collect(SqueezePolicy(), replay, 60)
            outs.append(replay.q_obs[:60].copy())
        np.testing.assert_array_equal(outs[0], outs[1])
