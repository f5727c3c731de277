"""Uniform ring-buffer replay with asymmetric observation pairs."""

from __future__ import annotations

import numpy as np
import torch


class ReplayBuffer:
    """FIFO transition store.

    Timeout resets are stored with termination_flag False so the critic
    bootstrap treats them as non-terminal.
    """

    def __init__(self, capacity: int, policy_dim: int, q_dim: int, act_dim: int = 12):
        self.capacity = int(capacity)
        self.policy_obs = np.zeros((capacity, policy_dim), dtype=np.float32)
        self.q_obs = np.zeros((capacity, q_dim), dtype=np.float32)
        self.action = np.zeros((capacity, act_dim), dtype=np.float32)
        self.reward = np.zeros(capacity, dtype=np.float32)
        self.terminal = np.zeros(capacity, dtype=np.float32)
        self.next_policy_obs = np.zeros((capacity, policy_dim), dtype=np.float32)
        self.next_q_obs = np.zeros((capacity, q_dim), dtype=np.float32)
        self.ptr = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, policy_obs, q_obs, action, reward, terminal, next_policy_obs, next_q_obs):
        i = self.ptr
        self.policy_obs[i] = policy_obs
        self.q_obs[i] = q_obs
        self.action[i] = action
        self.reward[i] = reward
        self.terminal[i] = 1.0 if terminal else 0.0
        self.next_policy_obs[i] = next_policy_obs
        self.next_q_obs[i] = next_q_obs
        self.ptr = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator, dtype=torch.float32):
        idx = rng.integers(0, self.size, size=batch_size)
        to = lambda a: torch.as_tensor(a[idx], dtype=dtype)
        return {
            "policy_obs": to(self.policy_obs),
            "q_obs": to(self.q_obs),
            "action": to(self.action),
            "reward": to(self.reward),
            "terminal": to(self.terminal),
            "next_policy_obs": to(self.next_policy_obs),
            "next_q_obs": to(self.next_q_obs),
        }
