"""Policy and Q-function networks: plain MLPs with a squashed-Gaussian head."""

from __future__ import annotations

import math

import torch
import torch.nn as nn

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0


def mlp(sizes, out_dim, dtype=torch.float32):
    layers = []
    prev = sizes[0]
    for h in sizes[1:]:
        layers += [nn.Linear(prev, h, dtype=dtype), nn.ReLU()]
        prev = h
    layers.append(nn.Linear(prev, out_dim, dtype=dtype))
    return nn.Sequential(*layers)


class PolicyNet(nn.Module):
    """Squashed-Gaussian policy: obs -> (mean, log_std), actions in (-1, 1)."""

    def __init__(self, obs_dim: int, act_dim: int = 12, hidden=(512, 512), dtype=torch.float32):
        super().__init__()
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.body = mlp((obs_dim, *hidden), 2 * act_dim, dtype=dtype)

    def forward(self, obs: torch.Tensor):
        out = self.body(obs)
        mean, log_std = out.chunk(2, dim=-1)
        return mean, log_std.clamp(LOG_STD_MIN, LOG_STD_MAX)

    def sample_with_eps(self, obs: torch.Tensor, eps: torch.Tensor):
        """Reparameterized squashed sample using an externally drawn unit
        normal (keeps gradient checks and worker sampling deterministic)."""
        mean, log_std = self(obs)
        std = log_std.exp()
        pre = mean + std * eps
        act = torch.tanh(pre)
        # log N(pre; mean, std) minus the tanh change of variables
        logp = (
            -0.5 * (((pre - mean) / std) ** 2 + 2.0 * log_std + math.log(2.0 * math.pi))
        ).sum(-1)
        logp = logp - (2.0 * (math.log(2.0) - pre - nn.functional.softplus(-2.0 * pre))).sum(-1)
        return act, logp

    def act(self, obs: torch.Tensor, deterministic: bool, generator=None):
        with torch.no_grad():
            if deterministic:
                mean, _ = self(obs)
                return torch.tanh(mean)
            eps = torch.randn(
                obs.shape[:-1] + (self.act_dim,), generator=generator, dtype=obs.dtype
            )
            act, _ = self.sample_with_eps(obs, eps)
            return act


class QNet(nn.Module):
    """Scalar state-action value on the privileged observation."""

    def __init__(self, obs_dim: int, act_dim: int = 12, hidden=(512, 512), dtype=torch.float32):
        super().__init__()
        self.body = mlp((obs_dim + act_dim, *hidden), 1, dtype=dtype)

    def forward(self, obs: torch.Tensor, act: torch.Tensor) -> torch.Tensor:
        return self.body(torch.cat([obs, act], dim=-1)).squeeze(-1)
