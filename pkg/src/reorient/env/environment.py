"""Surrogate hand-cube environment.

A four-finger hand on a downward-facing palm grips a cube against gravity.
The policy commands relative joint targets at 10 Hz; physics integrates at
1 kHz in the substep kernel; estimator frames are exposed at 100 Hz.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .. import rotations as rot
from .domain import DomainConfig, sample_domain
from .hand import ControllerState, HandState, apply_action
from .kernel import LANE, run_substeps
from .params import (
    D_MAX_TIP_NORMAL_Z,
    D_SIZE,
    D_TIP_FORCE_0,
    E_SIZE,
    N_ANCHORS,
    PhysicsParams,
    pack_params,
)

EVENT_NONE = "none"
EVENT_DROPPED = "dropped"
EVENT_OUT_OF_BOUNDS = "out_of_bounds"
EVENT_SUCCESS = "success"
EVENT_TIMEOUT_GOAL = "timeout_goal"
EVENT_TIMEOUT_EPISODE = "timeout_episode"

# Only these carry a learning termination signal; timeouts do not.
TERMINAL_EVENTS = (EVENT_DROPPED, EVENT_OUT_OF_BOUNDS, EVENT_SUCCESS)

DROP_HEIGHT = -0.05
BOUND_RADIUS = 0.10
SUCCESS_POS = 0.025
SUCCESS_ANGLE = 0.4
SUCCESS_HOLD_STEPS = 4
GOAL_TIMEOUT = 10.0
EPISODE_TIMEOUT = 120.0


@dataclass
class CubeState:
    """Cube rigid-body state: position, orientation, linear/angular velocity."""

    x: np.ndarray
    rot: rot.Rotation
    v: np.ndarray
    w: np.ndarray

    def copy(self) -> "CubeState":
        return CubeState(self.x.copy(), self.rot, self.v.copy(), self.w.copy())

    def to_dict(self) -> dict:
        return {
            "x": [float(c) for c in self.x],
            "R": self.rot.as_list(),
            "v": [float(c) for c in self.v],
            "w": [float(c) for c in self.w],
        }

    def as_vector(self) -> np.ndarray:
        """Flat [x(3), quat wxyz(4), v(3), w(3)] vector, shape (13,)."""
        return np.concatenate([self.x, self.rot.as_array(), self.v, self.w])

    @classmethod
    def from_vector(cls, s: np.ndarray) -> "CubeState":
        return cls(
            np.asarray(s[0:3], dtype=float).copy(),
            rot.from_array(s[3:7]),
            np.asarray(s[7:10], dtype=float).copy(),
            np.asarray(s[10:13], dtype=float).copy(),
        )


@dataclass
class StepResult:
    hand: HandState
    cube_true: CubeState
    event: str
    info: dict[str, Any] = field(default_factory=dict)


class ResetError(RuntimeError):
    """Force closure could not be established within the retry budget."""


class SimulationDiverged(RuntimeError):
    """Non-finite state encountered in the integrator."""


def check_termination(
    cube: CubeState,
    goal: rot.Rotation,
    history,
    goal_elapsed: float,
    episode_elapsed: float,
) -> str:
    """Episode event for the current step.

    `history` holds (|x|, orientation) for the most recent policy steps
    including the current one; success requires the last 4 entries inside
    both thresholds against the current goal.
    """
    if cube.x[2] <= DROP_HEIGHT:
        return EVENT_DROPPED
    if float(np.linalg.norm(cube.x)) > BOUND_RADIUS:
        return EVENT_OUT_OF_BOUNDS
    if len(history) >= SUCCESS_HOLD_STEPS:
        held = all(
            xn < SUCCESS_POS and rot.distance(goal, r) < SUCCESS_ANGLE
            for xn, r in list(history)[-SUCCESS_HOLD_STEPS:]
        )
        if held:
            return EVENT_SUCCESS
    if goal_elapsed >= GOAL_TIMEOUT - 1e-9:
        return EVENT_TIMEOUT_GOAL
    if episode_elapsed >= EPISODE_TIMEOUT - 1e-9:
        return EVENT_TIMEOUT_EPISODE
    return EVENT_NONE


class HandCubeEnv:
    """One environment instance: single-threaded, explicitly seeded.

    Sensor noise draws come from a stream separate from physics draws, so
    the true trajectory for a given seed is identical whether or not noise
    is enabled.
    """

    def __init__(
        self,
        phys: PhysicsParams | None = None,
        seed: int = 0,
        alpha: float = 0.5,
    ):
        self.phys = phys or PhysicsParams()
        seq = np.random.SeedSequence(seed)
        s_phys, s_noise = seq.spawn(2)
        self.rng = np.random.default_rng(s_phys)
        self.noise_rng = np.random.default_rng(s_noise)
        self.alpha = alpha
        self.lane = LANE

        self.qmin, self.qmax = self.phys.joint_limits()
        self._mounts = self.phys.mounts()
        self._inward = self.phys.inward()
        self._group = rot.octahedral_group()

        self.cfg: DomainConfig | None = None
        self.goal = rot.IDENTITY
        self._goal_steps = 0
        self._episode_steps = 0
        self._history: deque = deque(maxlen=SUCCESS_HOLD_STEPS)

        # raw state arrays shared with the kernel
        self._q = np.zeros(12)
        self._qdot = np.zeros(12)
        self._qbar = np.zeros(12)
        self._cx = np.zeros(3)
        self._cq = np.array([1.0, 0.0, 0.0, 0.0])
        self._cv = np.zeros(3)
        self._cw = np.zeros(3)
        self._energy = np.zeros(E_SIZE)
        self._diag = np.zeros(D_SIZE)
        self._anchors = np.zeros((N_ANCHORS, 3))
        self._spin_anchors = np.zeros(4)
        self._ke0 = 0.0
        self.ctrl: ControllerState | None = None
        self._params: np.ndarray | None = None

    # ------------------------------------------------------------------
    # state access

    def hand_state(self) -> HandState:
        return HandState(self._q.copy(), self._qdot.copy())

    def cube_state(self) -> CubeState:
        return CubeState(
            self._cx.copy(), rot.from_array(self._cq), self._cv.copy(), self._cw.copy()
        )

    def theta(self) -> float:
        """Angle between the current cube orientation and the goal."""
        return rot.distance(self.goal, rot.from_array(self._cq))

    def kinetic_energy(self) -> float:
        cfg = self.cfg
        assert cfg is not None
        inertia = cfg.cube_mass * cfg.cube_size**2 / 6.0
        return float(
            0.5 * self.phys.joint_inertia * np.dot(self._qdot, self._qdot)
            + 0.5 * cfg.cube_mass * np.dot(self._cv, self._cv)
            + 0.5 * inertia * np.dot(self._cw, self._cw)
        )

    def energy_ledger(self) -> dict[str, float]:
        """Work channels since episode start plus the exact balance residual."""
        names = ["actuator", "limit", "contact_joints", "gravity", "perturbation", "contact_cube"]
        ledger = {n: float(self._energy[i]) for i, n in enumerate(names)}
        ledger["kinetic_start"] = self._ke0
        ledger["kinetic_now"] = self.kinetic_energy()
        ledger["balance"] = (ledger["kinetic_now"] - self._ke0) - float(self._energy.sum())
        return ledger

    def set_goal(self, goal: rot.Rotation) -> None:
        self.goal = goal
        self._goal_steps = 0

    @property
    def episode_elapsed(self) -> float:
        return self._episode_steps * self.step_period

    @property
    def step_period(self) -> float:
        return self.phys.dt * self.phys.substeps_per_policy_step

    # ------------------------------------------------------------------
    # reset

    def reset(
        self,
        cfg: DomainConfig | None = None,
        goal: rot.Rotation | None = None,
        base_rotation: rot.Rotation | None = None,
        max_retries: int = 10,
    ) -> StepResult:
        """Sample a pose, script the grasp closure, settle, verify force closure.

        base_rotation pins the pre-jitter cube orientation (the benchmark
        hands the cube over in the raster start pose); by default a random
        symmetry-group element is used.
        """
        self.cfg = (cfg or sample_domain(self.rng)).validate()
        if goal is not None:
            self.goal = goal

        last_err = "closure not attempted"
        for _ in range(max_retries):
            ok, why = self._try_reset(base_rotation)
            if ok:
                self._energy[:] = 0.0
                self._ke0 = self.kinetic_energy()
                self._goal_steps = 0
                self._episode_steps = 0
                self._history.clear()
                self._history.append(
                    (float(np.linalg.norm(self._cx)), rot.from_array(self._cq))
                )
                return StepResult(self.hand_state(), self.cube_state(), EVENT_NONE, {})
            last_err = why
        raise ResetError(f"no force closure after {max_retries} attempts: {last_err}")

    def _spawn_pose(self, base_rotation: rot.Rotation | None) -> tuple[np.ndarray, rot.Rotation]:
        base = base_rotation
        if base is None:
            base = self._group[int(self.rng.integers(24))]
        axis = self.rng.standard_normal(3)
        while float(np.dot(axis, axis)) < 1e-12:
            axis = self.rng.standard_normal(3)
        r0 = rot.compose(rot.from_axis_angle(axis, float(self.rng.uniform(0.0, 0.1))), base)
        half = self.cfg.cube_size / 2.0
        corners = np.array(
            [[sx * half, sy * half, sz * half] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]
        )
        min_z = min(float(rot.rotate(r0, c)[2]) for c in corners)
        x0 = np.array(
            [
                float(self.rng.uniform(-0.003, 0.003)),
                float(self.rng.uniform(-0.003, 0.003)),
                self.phys.support_z - min_z + 0.0005,
            ]
        )
        return x0, r0

    def _tip_gaps(self) -> np.ndarray:
        """Distance from each fingertip sphere to the cube surface (negative
        when penetrating); drives the approach-speed schedule during reset."""
        from .hand import fingertips

        tips = fingertips(self._q, self.phys)
        r = rot.from_array(self._cq)
        rinv = rot.inverse(r)
        half = self.cfg.cube_size / 2.0
        gaps = np.zeros(4)
        for f in range(4):
            p = rot.rotate(rinv, tips[f] - self._cx)
            d_out = np.maximum(np.abs(p) - half, 0.0)
            dist = float(np.linalg.norm(d_out))
            if dist == 0.0:
                dist = float(np.max(np.abs(p)) - half)  # inside: negative
            gaps[f] = dist - self.phys.tip_radius
        return gaps

    _Q2_OPEN = 0.01
    _Q3_OPEN = 0.035

    def _tip_extension(self, q3: float) -> float:
        """Horizontal tip travel from the mount toward the palm center for
        distal angle q3 at the fixed open-pose proximal angle."""
        l1, l2, l3 = self.phys.link_lengths
        q2 = self._Q2_OPEN
        return (
            l1 * math.sin(q2) + l2 * math.sin(q2 + q3) + l3 * math.sin(q2 + 2.0 * q3)
        )

    def _solve_extension(self, s_target: float, q3_init: float) -> float:
        """Distal angle whose tip extension equals s_target (1-D Newton;
        extension is monotone in q3 over the working range)."""
        l1, l2, l3 = self.phys.link_lengths
        q2 = self._Q2_OPEN
        q3 = max(q3_init, 0.01)
        for _ in range(25):
            err = self._tip_extension(q3) - s_target
            slope = l2 * math.cos(q2 + q3) + 2.0 * l3 * math.cos(q2 + 2.0 * q3)
            if slope < 1e-6:
                break
            step = err / slope
            q3 -= step
            if abs(step) < 1e-10:
                break
        return float(np.clip(q3, self.qmin[2], self.qmax[2]))

    def _try_reset(self, base_rotation: rot.Rotation | None) -> tuple[bool, str]:
        phys = self.phys
        x0, r0 = self._spawn_pose(base_rotation)
        self._q[:] = np.tile([0.0, self._Q2_OPEN, self._Q3_OPEN], 4)
        self._qdot[:] = 0.0
        self._qbar[:] = self._q
        self._cx[:] = x0
        self._cq[:] = r0.as_array()
        self._cv[:] = 0.0
        self._cw[:] = 0.0
        self._anchors[:] = 0.0
        self._spin_anchors[:] = 0.0

        params = pack_params(phys, self.cfg, support_on=True)
        zero3 = np.zeros(3)
        no_frames = np.zeros((0, 24))
        tick = 10  # substeps per closing tick (10 ms)

        def _run_tick() -> bool:
            status = run_substeps(
                self._q, self._qdot, self._qbar, self._cx, self._cq, self._cv, self._cw,
                params, self._mounts, self._inward, self.qmin, self.qmax,
                zero3, zero3, self._anchors, self._spin_anchors,
                tick, 0, no_frames, self._energy, self._diag,
            )
            return status == 0

        # feedforward position grasp: per finger, solve the distal angle
        # that presses the tip a fixed depth into its face, then ramp the
        # targets there gently; grasp compliance equalizes the four forces
        gaps = self._tip_gaps()
        if np.any(gaps < 0.0):
            return False, "fingertip spawned inside the cube"
        press = 0.012
        q3_target = np.zeros(4)
        for f in range(4):
            s_target = self._tip_extension(self._q[3 * f + 2]) + gaps[f] + press
            q3_target[f] = self._solve_extension(s_target, self._q[3 * f + 2])
        q3_start = self._qbar[2::3].copy()
        n_ramp = 100  # 1.0 s closing ramp
        for k in range(1, n_ramp + 1):
            self._qbar[2::3] = q3_start + (q3_target - q3_start) * (k / n_ramp)
            np.clip(self._qbar, self.qmin, self.qmax, out=self._qbar)
            if not _run_tick():
                return False, "diverged during closing"
        # hold, measure, then trim each finger toward the target grip force
        # (one feedforward correction round, so opposing forces balance)
        grip_target = 0.9
        grip_slope = 8.0  # N of tip force per rad of distal command
        for trim_round in range(3):
            force_sum = np.zeros(4)
            for _ in range(30):
                if not _run_tick():
                    return False, "diverged during grasp hold"
                force_sum += self._diag[D_TIP_FORCE_0 : D_TIP_FORCE_0 + 4]
            mean_force = force_sum / (30.0 * tick)
            err = grip_target - mean_force
            if float(np.max(np.abs(err))) < 0.05:
                break
            trim = np.clip(err / grip_slope, -0.05, 0.05)
            base = self._qbar[2::3].copy()
            for k in range(1, 21):
                self._qbar[2::3] = base + trim * (k / 20.0)
                np.clip(self._qbar, self.qmin, self.qmax, out=self._qbar)
                if not _run_tick():
                    return False, "diverged during grip trim"
        if np.any(mean_force < 0.3):
            return False, f"grip forces after closing: {np.round(mean_force, 3).tolist()}"

        # remove the support and let the grasp settle
        params = pack_params(phys, self.cfg, support_on=False)
        for _ in range(5):  # 0.5 s base settle + up to 4 x 0.25 s patience
            status = run_substeps(
                self._q, self._qdot, self._qbar, self._cx, self._cq, self._cv, self._cw,
                params, self._mounts, self._inward, self.qmin, self.qmax,
                zero3, zero3, self._anchors, self._spin_anchors,
                500, 0, no_frames, self._energy, self._diag,
            )
            if status != 0:
                return False, "diverged during settle"
            speed = float(np.linalg.norm(self._cv))
            spin = float(np.linalg.norm(self._cw))
            if speed < 1e-3 and spin < 2e-2:
                break
        else:
            return False, f"did not settle (speed {speed:.2e})"

        contacts = sum(1 for f in range(4) if self._diag[D_TIP_FORCE_0 + f] > 0.05)
        if contacts < 3:
            return False, f"only {contacts} fingertip contacts after settle"
        if self._cx[2] <= DROP_HEIGHT or float(np.linalg.norm(self._cx)) > BOUND_RADIUS:
            return False, "cube escaped during closure"

        self.ctrl = ControllerState(
            q_bar=self._qbar.copy(),
            q_tilde_prev=self._qbar.copy(),
            k_p=self.cfg.k_p,
            k_d=self.cfg.k_d,
            tau_max=phys.tau_max,
            alpha=self.alpha,
        )
        self._params = pack_params(phys, self.cfg, support_on=False)
        return True, ""

    # ------------------------------------------------------------------
    # stepping

    def step(self, action: np.ndarray) -> StepResult:
        """Advance one policy period (0.1 s): lowpass the action target,
        integrate 100 substeps, expose 100 Hz estimator frames, classify
        the episode event.
        """
        if self.ctrl is None or self._params is None:
            raise RuntimeError("step() before reset()")
        phys = self.phys
        cfg = self.cfg
        assert cfg is not None

        sticky = float(self.rng.uniform()) < cfg.sticky_prob
        if not sticky:
            hand = HandState(self._q, self._qdot)  # views are fine here
            self.ctrl = apply_action(self.ctrl, hand, action, self.qmin, self.qmax)
        self._qbar[:] = self.ctrl.q_bar

        pert_f = self.rng.normal(0.0, phys.perturb_force_std, 3)
        pert_t = self.rng.normal(0.0, phys.perturb_torque_std, 3)

        n_frames = phys.substeps_per_policy_step // phys.substeps_per_frame
        frames_z = np.zeros((n_frames, 24))
        frames_u = np.tile(self._qbar, (n_frames, 1))
        frames_s = np.zeros((n_frames, 13))
        no_frames = np.zeros((0, 24))
        diag = np.zeros(D_SIZE)

        for k in range(n_frames):
            status = run_substeps(
                self._q, self._qdot, self._qbar, self._cx, self._cq, self._cv, self._cw,
                self._params, self._mounts, self._inward, self.qmin, self.qmax,
                pert_f, pert_t, self._anchors, self._spin_anchors,
                phys.substeps_per_frame, 0, no_frames,
                self._energy, self._diag,
            )
            if status != 0:
                raise SimulationDiverged("non-finite state in substep kernel")
            q_meas = self._q + cfg.q_offset + self.noise_rng.normal(0.0, cfg.sigma_q, 12)
            frames_z[k, :12] = q_meas
            frames_z[k, 12:] = self._qdot
            frames_s[k, 0:3] = self._cx
            frames_s[k, 3:7] = self._cq
            frames_s[k, 7:10] = self._cv
            frames_s[k, 10:13] = self._cw
            self._merge_diag(diag, self._diag)

        self._episode_steps += 1
        self._goal_steps += 1

        cube = self.cube_state()
        self._history.append((float(np.linalg.norm(cube.x)), cube.rot))
        event = check_termination(
            cube,
            self.goal,
            self._history,
            self._goal_steps * self.step_period,
            self._episode_steps * self.step_period,
        )

        info = {
            "theta": rot.distance(self.goal, cube.rot),
            "x_norm": float(np.linalg.norm(cube.x)),
            "q_meas": frames_z[-1, :12].copy(),
            "frames_z": frames_z,
            "frames_u": frames_u,
            "frames_s": frames_s,
            "diag": diag,
            "sticky": sticky,
            "energy": self.energy_ledger(),
        }
        return StepResult(self.hand_state(), cube, event, info)

    @staticmethod
    def _merge_diag(acc: np.ndarray, d: np.ndarray) -> None:
        acc[0] = max(acc[0], d[0])
        acc[1] = max(acc[1], d[1])
        acc[2:8] += d[2:8]
        acc[D_MAX_TIP_NORMAL_Z] = max(acc[D_MAX_TIP_NORMAL_Z], d[D_MAX_TIP_NORMAL_Z])
        acc[D_TIP_FORCE_0 : D_TIP_FORCE_0 + 4] = d[D_TIP_FORCE_0 : D_TIP_FORCE_0 + 4]

    # ------------------------------------------------------------------
    # observation-side measurements (never fed back into physics)

    def measured_cube(self) -> CubeState:
        """Noisy copy of the true cube state for simulator-state stages."""
        cfg = self.cfg
        assert cfg is not None
        x = self._cx + self.noise_rng.normal(0.0, cfg.sigma_x, 3)
        r = rot.perturb_rotation(rot.from_array(self._cq), cfg.sigma_rot, self.noise_rng)
        return CubeState(x, r, self._cv.copy(), self._cw.copy())

    def measured_q(self) -> np.ndarray:
        """Joint angles as the sensors report them: offset plus per-step noise."""
        cfg = self.cfg
        assert cfg is not None
        return self._q + cfg.q_offset + self.noise_rng.normal(0.0, cfg.sigma_q, 12)
