"""Asymmetric observation construction and time stacking.

The policy sees only deployable quantities (measured joints, estimated or
noise-corrupted cube pose); the Q-function sees the true simulator state
plus the cube's linear velocity. The two frames are built by separate
functions so no code path can leak estimates into Q inputs.

Frame layout (field order is part of the checkpoint contract):
  q(12), q_bar_prev(12), ctrl_err(12), goal(4), cube_pos(3),
  cube_rot_sym(4), delta_rot(4)[, cube_vel(3) for the Q-function]
"""

from __future__ import annotations

import numpy as np

from .. import rotations as rot
from ..env.environment import CubeState

POLICY_DIM = 51
Q_DIM = 54
STACK = 5


def policy_frame(
    q_meas: np.ndarray,
    q_bar_prev: np.ndarray,
    goal: rot.Rotation,
    cube_pos: np.ndarray,
    cube_rot: rot.Rotation,
) -> np.ndarray:
    """Policy-side frame from measured joints and an estimated or
    noise-corrupted cube pose. Never contains velocities."""
    out = np.empty(POLICY_DIM)
    out[0:12] = q_meas
    out[12:24] = q_bar_prev
    out[24:36] = q_bar_prev - q_meas
    out[36:40] = goal.as_array()
    out[40:43] = cube_pos
    out[43:47] = rot.reduce_symmetry(cube_rot).as_array()
    out[47:51] = rot.compose(rot.inverse(goal), cube_rot).as_array()
    return out


def q_frame(
    q_true: np.ndarray,
    q_bar_prev: np.ndarray,
    goal: rot.Rotation,
    cube: CubeState,
) -> np.ndarray:
    """Privileged Q-function frame: exact joints, exact cube state, and the
    cube's linear velocity."""
    out = np.empty(Q_DIM)
    out[0:12] = q_true
    out[12:24] = q_bar_prev
    out[24:36] = q_bar_prev - q_true
    out[36:40] = goal.as_array()
    out[40:43] = cube.x
    out[43:47] = rot.reduce_symmetry(cube.rot).as_array()
    out[47:51] = rot.compose(rot.inverse(goal), cube.rot).as_array()
    out[51:54] = cube.v
    return out


class ObservationStack:
    """Fixed-length history of frames, zero-padded at episode start.

    The flattened vector keeps the newest frame last.
    """

    def __init__(self, frame_dim: int, depth: int = STACK):
        self.frame_dim = frame_dim
        self.depth = depth
        self._buf = np.zeros((depth, frame_dim))

    def reset(self) -> None:
        self._buf[:] = 0.0

    def push(self, frame: np.ndarray) -> None:
        if frame.shape != (self.frame_dim,):
            raise ValueError(f"frame shape {frame.shape}, expected ({self.frame_dim},)")
        self._buf[:-1] = self._buf[1:]
        self._buf[-1] = frame

    def vector(self) -> np.ndarray:
        return self._buf.reshape(-1).copy()

    @property
    def dim(self) -> int:
        return self.frame_dim * self.depth
