"""Soft actor-critic with twin critics, target networks, and a learned
entropy temperature. Observations are asymmetric: the actor consumes policy
observations, the critics consume privileged ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .networks import PolicyNet, QNet


@dataclass
class SACConfig:
    hidden: tuple = (256, 256)
    gamma: float = 0.99
    polyak_tau: float = 0.005
    lr: float = 3e-4
    batch_size: int = 256
    target_entropy: float = -12.0  # minus the action dimension
    init_alpha: float = 0.2
    updates_per_step: float = 1.0

    def to_dict(self):
        d = self.__dict__.copy()
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["hidden"] = tuple(d.get("hidden", (256, 256)))
        return cls(**d)


class SACTrainer:
    def __init__(
        self,
        policy_dim: int,
        q_dim: int,
        act_dim: int = 12,
        cfg: SACConfig | None = None,
        seed: int = 0,
        dtype=torch.float32,
    ):
        self.cfg = cfg or SACConfig()
        self.dtype = dtype
        self.act_dim = act_dim
        torch.manual_seed(seed)
        self.actor = PolicyNet(policy_dim, act_dim, self.cfg.hidden, dtype=dtype)
        self.q1 = QNet(q_dim, act_dim, self.cfg.hidden, dtype=dtype)
        self.q2 = QNet(q_dim, act_dim, self.cfg.hidden, dtype=dtype)
        self.q1_target = QNet(q_dim, act_dim, self.cfg.hidden, dtype=dtype)
        self.q2_target = QNet(q_dim, act_dim, self.cfg.hidden, dtype=dtype)
        self.q1_target.load_state_dict(self.q1.state_dict())
        self.q2_target.load_state_dict(self.q2.state_dict())
        for p in self.q1_target.parameters():
            p.requires_grad_(False)
        for p in self.q2_target.parameters():
            p.requires_grad_(False)
        self.log_alpha = torch.tensor(
            float(np.log(self.cfg.init_alpha)), dtype=dtype, requires_grad=True
        )
        lr = self.cfg.lr
        self.actor_opt = torch.optim.Adam(self.actor.parameters(), lr=lr)
        self.q_opt = torch.optim.Adam(
            list(self.q1.parameters()) + list(self.q2.parameters()), lr=lr
        )
        self.alpha_opt = torch.optim.Adam([self.log_alpha], lr=lr)
        self.generator = torch.Generator().manual_seed(seed + 1)
        self.updates_done = 0

    @property
    def alpha(self) -> torch.Tensor:
        return self.log_alpha.exp()

    # ------------------------------------------------------------------
    # losses (pure in the network parameters given pre-drawn noise, so the
    # finite-difference oracle can evaluate them repeatedly)

    def critic_loss(self, batch, eps_next: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            next_act, next_logp = self.actor.sample_with_eps(
                batch["next_policy_obs"], eps_next
            )
            tq = torch.min(
                self.q1_target(batch["next_q_obs"], next_act),
                self.q2_target(batch["next_q_obs"], next_act),
            )
            target = batch["reward"] + self.cfg.gamma * (1.0 - batch["terminal"]) * (
                tq - self.alpha.detach() * next_logp
            )
        l1 = ((self.q1(batch["q_obs"], batch["action"]) - target) ** 2).mean()
        l2 = ((self.q2(batch["q_obs"], batch["action"]) - target) ** 2).mean()
        return l1 + l2

    def actor_loss(self, batch, eps: torch.Tensor) -> torch.Tensor:
        act, logp = self.actor.sample_with_eps(batch["policy_obs"], eps)
        q = torch.min(self.q1(batch["q_obs"], act), self.q2(batch["q_obs"], act))
        return (self.alpha.detach() * logp - q).mean()

    def alpha_loss(self, batch, eps: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            _, logp = self.actor.sample_with_eps(batch["policy_obs"], eps)
        return -(self.log_alpha * (logp + self.cfg.target_entropy)).mean()

    # ------------------------------------------------------------------

    def _draw_eps(self, n: int) -> torch.Tensor:
        return torch.randn((n, self.act_dim), generator=self.generator, dtype=self.dtype)

    def update(self, batch) -> dict:
        n = batch["reward"].shape[0]

        closs = self.critic_loss(batch, self._draw_eps(n))
        self.q_opt.zero_grad()
        closs.backward()
        self.q_opt.step()

        for p in self.q1.parameters():
            p.requires_grad_(False)
        for p in self.q2.parameters():
            p.requires_grad_(False)
        eps = self._draw_eps(n)
        aloss = self.actor_loss(batch, eps)
        self.actor_opt.zero_grad()
        aloss.backward()
        self.actor_opt.step()
        for p in self.q1.parameters():
            p.requires_grad_(True)
        for p in self.q2.parameters():
            p.requires_grad_(True)

        tloss = self.alpha_loss(batch, eps)
        self.alpha_opt.zero_grad()
        tloss.backward()
        self.alpha_opt.step()

        self.polyak(self.cfg.polyak_tau)
        self.updates_done += 1
        if not (torch.isfinite(closs) and torch.isfinite(aloss) and torch.isfinite(tloss)):
            raise FloatingPointError(
                f"non-finite SAC loss at update {self.updates_done}: "
                f"critic={closs.item()} actor={aloss.item()} alpha={tloss.item()}"
            )
        return {
            "critic_loss": float(closs.item()),
            "actor_loss": float(aloss.item()),
            "alpha_loss": float(tloss.item()),
            "alpha": float(self.alpha.item()),
        }

    def polyak(self, tau: float) -> None:
        with torch.no_grad():
            for src, dst in (
                (self.q1, self.q1_target),
                (self.q2, self.q2_target),
            ):
                for p, pt in zip(src.parameters(), dst.parameters()):
                    pt.mul_(1.0 - tau).add_(p, alpha=tau)

    # ------------------------------------------------------------------
    # checkpointing

    def state_dict(self) -> dict:
        return {
            "version": 1,
            "cfg": self.cfg.to_dict(),
            "actor": self.actor.state_dict(),
            "q1": self.q1.state_dict(),
            "q2": self.q2.state_dict(),
            "q1_target": self.q1_target.state_dict(),
            "q2_target": self.q2_target.state_dict(),
            "log_alpha": self.log_alpha.detach().clone(),
            "actor_opt": self.actor_opt.state_dict(),
            "q_opt": self.q_opt.state_dict(),
            "alpha_opt": self.alpha_opt.state_dict(),
            "torch_rng": self.generator.get_state(),
            "updates_done": self.updates_done,
        }

    def load_state_dict(self, state: dict) -> None:
        self.actor.load_state_dict(state["actor"])
        self.q1.load_state_dict(state["q1"])
        self.q2.load_state_dict(state["q2"])
        self.q1_target.load_state_dict(state["q1_target"])
        self.q2_target.load_state_dict(state["q2_target"])
        with torch.no_grad():
            self.log_alpha.copy_(state["log_alpha"])
        self.actor_opt.load_state_dict(state["actor_opt"])
        self.q_opt.load_state_dict(state["q_opt"])
        self.alpha_opt.load_state_dict(state["alpha_opt"])
        self.generator.set_state(state["torch_rng"])
        self.updates_done = state["updates_done"]
