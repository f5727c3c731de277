"""Differentiable quaternion operations on batched torch tensors.

Quaternions are (..., 4) tensors in (w, x, y, z) order. These mirror the
scalar conventions in reorient.rotations; the numpy module stays the public
rotation API, this one exists for gradient flow through the filter.
"""

from __future__ import annotations

import torch


def qnormalize(q: torch.Tensor) -> torch.Tensor:
    return q / q.norm(dim=-1, keepdim=True).clamp_min(1e-12)


def qmul(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    aw, ax, ay, az = a.unbind(-1)
    bw, bx, by, bz = b.unbind(-1)
    return torch.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        dim=-1,
    )


def qinv(q: torch.Tensor) -> torch.Tensor:
    w, x, y, z = q.unbind(-1)
    return torch.stack([w, -x, -y, -z], dim=-1)


def rotvec_to_quat(v: torch.Tensor) -> torch.Tensor:
    """Exponential map: rotation vector (..., 3) to unit quaternion."""
    angle = v.norm(dim=-1, keepdim=True)
    half = 0.5 * angle
    small = angle < 1e-8
    # sin(theta/2)/theta with a series fallback at zero
    k = torch.where(small, 0.5 - angle * angle / 48.0, torch.sin(half) / angle.clamp_min(1e-30))
    w = torch.cos(half)
    return torch.cat([w, v * k], dim=-1)


def quat_angle(q: torch.Tensor) -> torch.Tensor:
    """Rotation angle of each quaternion, in [0, pi]."""
    vec = q[..., 1:].norm(dim=-1)
    return 2.0 * torch.atan2(vec, q[..., 0].abs())


def quat_distance(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Geodesic angle between orientations; the atan2 form stays well
    conditioned near zero where the loss gradients live."""
    d = (a - b).norm(dim=-1)
    s = (a + b).norm(dim=-1)
    lo = torch.minimum(d, s)
    hi = torch.maximum(d, s).clamp_min(1e-30)
    return 4.0 * torch.atan2(lo, hi)
