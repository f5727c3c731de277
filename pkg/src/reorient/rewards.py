"""The three reward functions used across the training stages.

All weights live in RewardConfig and are plain config values; the shipped
defaults are what the training pipeline and the acceptance checks use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict


@dataclass(frozen=True)
class RewardConfig:
    # goal reward r_g
    lambda_theta: float = 1.0
    eps_theta: float = 0.1
    lambda_pos: float = 1e4
    lambda_clip: float = 1.0
    lambda_drop: float = -10.0
    lambda_succ: float = 10.0
    # simple reward r_s
    lambda_theta_s: float = 5.0
    lambda_pos_s: float = 20.0
    lambda_clip_s: float = 0.25
    # estimator reward r_e (penalty on top of r_s)
    lambda_pos_e: float = 100.0
    lambda_phi: float = 1.0
    lambda_clip_e: float = 0.5

    def __post_init__(self):
        if self.eps_theta <= 0:
            raise ValueError("eps_theta must be > 0")
        if min(self.lambda_clip, self.lambda_clip_s, self.lambda_clip_e) < 0:
            raise ValueError("clip bounds must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RewardConfig":
        return cls(**d)


def reward_goal(theta: float, x, event: str, cfg: RewardConfig) -> float:
    """Dense goal reward: inverse angle term, clipped quartic position
    penalty, and explicit drop/success bonuses.

    `x` is the cube position (any 3-sequence); `event` is one of the
    episode event names ('dropped' and 'success' carry bonuses).
    """
    x0, x1, x2 = float(x[0]), float(x[1]), float(x[2])
    norm2 = x0 * x0 + x1 * x1 + x2 * x2
    pos_term = min(max(cfg.lambda_pos * norm2 * norm2, 0.0), cfg.lambda_clip)
    r = cfg.lambda_theta / (theta + cfg.eps_theta) - pos_term
    if event == "dropped":
        r += cfg.lambda_drop
    elif event == "success":
        r += cfg.lambda_succ
    return r


def reward_simple(dtheta: float, dx: float, cfg: RewardConfig) -> float:
    """Relative-change reward: progress in angle (clipped from above) minus
    progress away from the origin. No explicit success or drop bonuses.
    """
    return min(-cfg.lambda_theta_s * dtheta, cfg.lambda_clip_s) - cfg.lambda_pos_s * dx


def estimator_penalty(x_err: float, phi: float, cfg: RewardConfig) -> float:
    """Clipped quadratic penalty on estimation error, in [0, lambda_clip_e]."""
    raw = cfg.lambda_pos_e * x_err * x_err + cfg.lambda_phi * phi * phi
    return min(max(raw, 0.0), cfg.lambda_clip_e)


def reward_estimator(r_s: float, x_err: float, phi: float, cfg: RewardConfig) -> float:
    """Simple reward minus the clipped estimation-error penalty.

    x_err is the Euclidean position estimate error in meters, phi the
    angular estimate error in radians.
    """
    return r_s - estimator_penalty(x_err, phi, cfg)
