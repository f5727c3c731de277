"""Trajectory loss for filter training: weighted squared per-component
distances (Euclidean for position and velocities, angular for rotation)
averaged over the sequence."""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .so3_torch import quat_distance


@dataclass(frozen=True)
class FilterLossConfig:
    c_x: float = 1.0
    c_R: float = 100.0
    c_v: float = 0.1
    c_w: float = 0.1

    def __post_init__(self):
        if min(self.c_x, self.c_R, self.c_v, self.c_w) < 0:
            raise ValueError("loss weights must be >= 0")


def filter_loss(
    pred: torch.Tensor, truth: torch.Tensor, cfg: FilterLossConfig | None = None
) -> torch.Tensor:
    """Mean over time of the weighted squared state errors.

    pred and truth are (..., T, 13) sequences; both sides must have the
    same length. a scalar per leading batch shape is reduced to its mean.
    """
    cfg = cfg or FilterLossConfig()
    if pred.shape != truth.shape:
        raise ValueError(f"sequence shapes differ: {tuple(pred.shape)} vs {tuple(truth.shape)}")
    dx = (pred[..., 0:3] - truth[..., 0:3]).pow(2).sum(-1)
    dr = quat_distance(pred[..., 3:7], truth[..., 3:7]).pow(2)
    dv = (pred[..., 7:10] - truth[..., 7:10]).pow(2).sum(-1)
    dw = (pred[..., 10:13] - truth[..., 10:13]).pow(2).sum(-1)
    per_t = cfg.c_x * dx + cfg.c_R * dr + cfg.c_v * dv + cfg.c_w * dw
    return per_t.mean()


def component_errors(pred: torch.Tensor, truth: torch.Tensor):
    """Unweighted (position, rotation) errors per step, for evaluation."""
    pos = (pred[..., 0:3] - truth[..., 0:3]).norm(dim=-1)
    ang = quat_distance(pred[..., 3:7], truth[..., 3:7])
    return pos, ang
