"""Learned proposal and update models for the cube state filter.

Cube particle states are (..., 13) tensors [x(3), quat wxyz(4), v(3), w(3)].
The proposal applies a constant-velocity kinematic prior then a learned
Gaussian increment (reparameterized, with a noise floor so the proposal
stays generative); the update model scores propagated particles against the
joint-sensor observation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn

from ..env.environment import CubeState
from .particles import filter_step, normalize_log_weights
from .so3_torch import qmul, qnormalize, quat_distance, rotvec_to_quat

FRAME_DT = 0.01  # 100 Hz estimator cadence

STATE_DIM = 13
Z_DIM = 24
U_DIM = 12
NOISE_DIM = 12  # dx(3), drot(3), dv(3), dw(3)

# input feature scaling: positions in cm-ish units, velocities O(1)
_FEAT_SCALE = torch.tensor([10.0] * 3 + [1.0] * 4 + [2.0] * 3 + [0.5] * 3 + [1.0] * 12 + [0.2] * 12 + [1.0] * 12)

# per-block base scale of the learned increment and its lower floor
_SIG_BASE = torch.tensor([3e-3] * 3 + [1e-2] * 3 + [1e-2] * 3 + [3e-2] * 3)
_SIG_MIN = torch.tensor([1e-4] * 3 + [1e-3] * 3 + [1e-3] * 3 + [3e-3] * 3)


def _features(states: torch.Tensor, z: torch.Tensor, u: torch.Tensor) -> torch.Tensor:
    n = states.shape[-2]
    zu = torch.cat([z, u], dim=-1).unsqueeze(-2).expand(*states.shape[:-2], n, Z_DIM + U_DIM)
    feats = torch.cat([states, zu], dim=-1)
    return feats * _FEAT_SCALE.to(feats.dtype)


class ProposalModel(nn.Module):
    """Generative one-step proposal: mean increment and log-scale per block."""

    def __init__(self, hidden=(128, 128), dtype=torch.float32):
        super().__init__()
        layers = []
        prev = STATE_DIM + Z_DIM + U_DIM
        for h in hidden:
            layers += [nn.Linear(prev, h, dtype=dtype), nn.Tanh()]
            prev = h
        self.body = nn.Sequential(*layers)
        self.mu_head = nn.Linear(prev, NOISE_DIM, dtype=dtype)
        self.sig_head = nn.Linear(prev, NOISE_DIM, dtype=dtype)
        # start as the bare kinematic prior with base-scale noise
        nn.init.zeros_(self.mu_head.weight)
        nn.init.zeros_(self.mu_head.bias)
        nn.init.zeros_(self.sig_head.weight)
        nn.init.zeros_(self.sig_head.bias)

    def increments(self, states, z, u):
        h = self.body(_features(states, z, u))
        mu = self.mu_head(h) * _SIG_BASE.to(states.dtype)
        raw = self.sig_head(h).clamp(-6.0, 2.0)
        sigma = torch.exp(raw) * _SIG_BASE.to(states.dtype) + _SIG_MIN.to(states.dtype)
        return mu, sigma

    def propagate(self, states, z, u, eps, deterministic=False):
        """Apply the kinematic prior plus a sampled learned increment."""
        x, quat, v, w = states.split([3, 4, 3, 3], dim=-1)
        x = x + FRAME_DT * v
        quat = qnormalize(qmul(rotvec_to_quat(FRAME_DT * w), quat))
        prior = torch.cat([x, quat, v, w], dim=-1)

        mu, sigma = self.increments(prior, z, u)
        delta = mu if deterministic else mu + sigma * eps
        dx, drot, dv, dw = delta.split([3, 3, 3, 3], dim=-1)
        x2 = prior[..., 0:3] + dx
        quat2 = qnormalize(qmul(rotvec_to_quat(drot), prior[..., 3:7]))
        v2 = prior[..., 7:10] + dv
        w2 = prior[..., 10:13] + dw
        return torch.cat([x2, quat2, v2, w2], dim=-1)


class UpdateModel(nn.Module):
    """Log-weight increment for a propagated particle given (z, u).

    The zero-initialized head makes an untrained update model exactly
    neutral (uniform weights), which is the stage-1 baseline behavior.
    """

    def __init__(self, hidden=(128, 128), dtype=torch.float32):
        super().__init__()
        layers = []
        prev = STATE_DIM + Z_DIM + U_DIM
        for h in hidden:
            layers += [nn.Linear(prev, h, dtype=dtype), nn.Tanh()]
            prev = h
        layers.append(nn.Linear(prev, 1, dtype=dtype))
        nn.init.zeros_(layers[-1].weight)
        nn.init.zeros_(layers[-1].bias)
        self.body = nn.Sequential(*layers)

    def forward(self, states, z, u):
        return self.body(_features(states, z, u)).squeeze(-1).clamp(-10.0, 10.0)


def estimate(states: torch.Tensor, log_w: torch.Tensor) -> torch.Tensor:
    """Point estimate per batch row: weighted means for position and
    velocities, the weighted medoid for rotation (ties to lowest index)."""
    w = torch.exp(normalize_log_weights(log_w)).unsqueeze(-1)
    x = (w * states[..., 0:3]).sum(-2)
    v = (w * states[..., 7:10]).sum(-2)
    om = (w * states[..., 10:13]).sum(-2)

    quat = states[..., 3:7]
    d = quat_distance(quat.unsqueeze(-2), quat.unsqueeze(-3))  # (B, N, N)
    cost = (w.squeeze(-1).unsqueeze(-2) * d * d).sum(-1)
    best = cost.argmin(dim=-1)
    b = quat.shape[0]
    med = quat[torch.arange(b), best]
    return torch.cat([x, med, v, om], dim=-1)


@dataclass
class FilterConfig:
    hidden: tuple = (128, 128)
    n_particles: int = 100
    n_particles_train: int = 32
    resample_threshold: float = 0.5
    # episode-start particle spread (known handover pose)
    init_sigma: tuple = (0.005, 0.05, 0.01, 0.03)  # x, rot, v, w

    def to_dict(self):
        d = self.__dict__.copy()
        d["hidden"] = list(self.hidden)
        d["init_sigma"] = list(self.init_sigma)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "hidden" in d:
            d["hidden"] = tuple(d["hidden"])
        if "init_sigma" in d:
            d["init_sigma"] = tuple(d["init_sigma"])
        return cls(**d)


@dataclass
class CubeFilter:
    """The filter model pair plus configuration and dataset statistics."""

    proposal: ProposalModel
    update: UpdateModel
    cfg: FilterConfig = field(default_factory=FilterConfig)
    data_sigma: np.ndarray | None = None  # training-data std (x3, rot, v3, w3)

    @classmethod
    def create(cls, cfg: FilterConfig | None = None, seed: int = 0, dtype=torch.float32):
        cfg = cfg or FilterConfig()
        torch.manual_seed(seed)
        return cls(
            proposal=ProposalModel(cfg.hidden, dtype=dtype),
            update=UpdateModel(cfg.hidden, dtype=dtype),
            cfg=cfg,
        )

    def state_dict(self):
        return {
            "version": 1,
            "cfg": self.cfg.to_dict(),
            "proposal": self.proposal.state_dict(),
            "update": self.update.state_dict(),
            "data_sigma": None if self.data_sigma is None else self.data_sigma.tolist(),
        }

    def load_state_dict(self, state):
        self.proposal.load_state_dict(state["proposal"])
        self.update.load_state_dict(state["update"])
        if state.get("data_sigma") is not None:
            self.data_sigma = np.asarray(state["data_sigma"])

    def step(self, states, log_w, z, u, eps, resample_u):
        """One 100 Hz prediction/update cycle through the generic core."""
        return filter_step(
            states,
            log_w,
            lambda s: self.proposal.propagate(s, z, u, eps),
            lambda s: self.update(s, z, u),
            resample_u,
            self.cfg.resample_threshold,
        )


def init_particles(
    cube: CubeState,
    n: int,
    sigma: tuple,
    generator: torch.Generator,
    bias: np.ndarray | None = None,
    dtype=torch.float32,
) -> torch.Tensor:
    """Particles around a known state: Gaussian in position/velocities, a
    random-axis Gaussian angle in rotation; optional deterministic bias
    (used during training). Shape (1, n, 13)."""
    s0 = torch.as_tensor(cube.as_vector(), dtype=dtype)
    if bias is not None:
        b = torch.as_tensor(bias, dtype=dtype)
        s0 = s0.clone()
        s0[0:3] += b[0:3]
        s0[3:7] = qnormalize(qmul(rotvec_to_quat(b[3:6]), s0[3:7]))
    sx, sr, sv, sw = sigma
    out = s0.repeat(n, 1)
    out[:, 0:3] += sx * torch.randn(n, 3, generator=generator, dtype=dtype)
    rv = sr * torch.randn(n, 3, generator=generator, dtype=dtype)
    out[:, 3:7] = qnormalize(qmul(rotvec_to_quat(rv), out[:, 3:7]))
    out[:, 7:10] += sv * torch.randn(n, 3, generator=generator, dtype=dtype)
    out[:, 10:13] += sw * torch.randn(n, 3, generator=generator, dtype=dtype)
    return out.unsqueeze(0)


class RunningFilter:
    """Online estimator for collection/benchmark loops.

    Satisfies the worker-pool estimator protocol: reset(cube) seeds the
    particle cloud from the known start pose; update(frames) consumes the
    ten 100 Hz frames of one policy period and returns the point estimate.
    """

    def __init__(self, models: CubeFilter, seed: int = 0, n_particles: int | None = None):
        self.models = models
        self.n = n_particles or models.cfg.n_particles
        self.generator = torch.Generator().manual_seed(seed)
        self.states: torch.Tensor | None = None
        self.log_w: torch.Tensor | None = None
        self._last: CubeState | None = None

    def reset(self, cube: CubeState) -> None:
        self.states = init_particles(
            cube, self.n, self.models.cfg.init_sigma, self.generator
        )
        self.log_w = torch.full((1, self.n), -float(np.log(self.n)))
        self._last = self._point()

    def update(self, frames_z: np.ndarray, frames_u: np.ndarray) -> CubeState:
        assert self.states is not None, "update() before reset()"
        with torch.no_grad():
            for k in range(frames_z.shape[0]):
                z = torch.as_tensor(frames_z[k], dtype=torch.float32)
                u = torch.as_tensor(frames_u[k], dtype=torch.float32)
                eps = torch.randn(
                    (1, self.n, NOISE_DIM), generator=self.generator, dtype=torch.float32
                )
                ru = torch.rand(1, generator=self.generator, dtype=torch.float32)
                self.states, self.log_w, _ = self.models.step(
                    self.states, self.log_w, z, u, eps, ru
                )
        self._last = self._point()
        return self._last

    def estimate(self) -> CubeState:
        assert self._last is not None, "estimate() before reset()"
        return self._last

    def _point(self) -> CubeState:
        with torch.no_grad():
            vec = estimate(self.states, self.log_w)[0].double().numpy()
        return CubeState.from_vector(vec)
