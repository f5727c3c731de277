"""Hand state, controller state, and the relative-action interface."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .kernel import fingertip_positions
from .params import PhysicsParams


@dataclass
class HandState:
    """12 active joints (4 fingers x q1, q2, q3) plus velocities.

    The passive distal joint of each finger is rigidly coupled, q4 = q3.
    """

    q: np.ndarray
    qdot: np.ndarray

    @property
    def q4(self) -> np.ndarray:
        return self.q.reshape(4, 3)[:, 2].copy()

    def copy(self) -> "HandState":
        return HandState(self.q.copy(), self.qdot.copy())


@dataclass
class ControllerState:
    """Lowpass-filtered desired joint angles and impedance constants."""

    q_bar: np.ndarray
    q_tilde_prev: np.ndarray
    k_p: float
    k_d: float
    tau_max: float
    alpha: float

    def __post_init__(self):
        if self.k_p <= 0 or self.k_d < 0 or self.tau_max <= 0:
            raise ValueError("require k_p > 0, k_d >= 0, tau_max > 0")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must be in [0, 1)")

    def copy(self) -> "ControllerState":
        return replace(self, q_bar=self.q_bar.copy(), q_tilde_prev=self.q_tilde_prev.copy())


def apply_action(
    ctrl: ControllerState,
    hand: HandState,
    action: np.ndarray,
    qmin: np.ndarray,
    qmax: np.ndarray,
) -> ControllerState:
    """Relative action to filtered target: clip(q + a*tau_max/k_p) then lowpass.

    Actions are interpreted relative to the current joint angles so the full
    joint range stays reachable regardless of where the fingers are.
    """
    a = np.asarray(action, dtype=np.float64)
    if a.shape != (12,):
        raise ValueError(f"action shape {a.shape}, expected (12,)")
    q_tilde = np.clip(hand.q + a * (ctrl.tau_max / ctrl.k_p), qmin, qmax)
    q_bar = ctrl.alpha * ctrl.q_bar + (1.0 - ctrl.alpha) * q_tilde
    return replace(ctrl, q_bar=q_bar, q_tilde_prev=q_tilde)


def fingertips(q: np.ndarray, phys: PhysicsParams) -> np.ndarray:
    """World-frame fingertip positions for joint vector q, shape (4, 3)."""
    out = np.zeros((4, 3), dtype=np.float64)
    l1, l2, l3 = phys.link_lengths
    fingertip_positions(q, phys.mounts(), phys.inward(), l1, l2, l3, out)
    return out
