"""Generic particle filtering core: weighting, resampling, the step recursion.

State-model agnostic so the linear-Gaussian oracle tests exercise exactly
the code the cube filter runs. States are (B, N, D); log-weights (B, N).
Resampling ancestor indices are treated as constants under differentiation
(gradients flow through the gathered particle values only).
"""

from __future__ import annotations

import torch


class FilterCollapsed(RuntimeError):
    """All particle weights vanished (non-finite normalizer)."""


def normalize_log_weights(log_w: torch.Tensor) -> torch.Tensor:
    norm = torch.logsumexp(log_w, dim=-1, keepdim=True)
    if not torch.isfinite(norm).all():
        raise FilterCollapsed("log-weight normalizer is not finite")
    return log_w - norm


def effective_sample_size(log_w: torch.Tensor) -> torch.Tensor:
    """1 / sum(w^2) per batch row, expecting normalized log-weights."""
    return torch.exp(-torch.logsumexp(2.0 * log_w, dim=-1))


def systematic_resample(log_w: torch.Tensor, u: torch.Tensor) -> torch.Tensor:
    """Ancestor indices (B, N) from normalized log-weights and offsets
    u in [0, 1), one per batch row."""
    b, n = log_w.shape
    w = torch.exp(log_w)
    cum = torch.cumsum(w, dim=-1)
    cum = cum / cum[..., -1:].clamp_min(1e-300)
    positions = (u.unsqueeze(-1) + torch.arange(n, dtype=log_w.dtype).unsqueeze(0)) / n
    idx = torch.searchsorted(cum, positions)
    return idx.clamp_max(n - 1)


def filter_step(
    states: torch.Tensor,
    log_w: torch.Tensor,
    propagate_fn,
    logweight_fn,
    resample_u: torch.Tensor,
    resample_threshold: float = 0.5,
):
    """One prediction/update cycle.

    propagate_fn(states) -> new states; logweight_fn(new_states) -> (B, N)
    increments. Systematic resampling triggers per batch row when the
    effective sample size drops below threshold * N; resampled rows get
    uniform weights. Returns (states, log_w, resampled_mask).
    """
    b, n, _ = states.shape
    states = propagate_fn(states)
    log_w = normalize_log_weights(log_w + logweight_fn(states))

    ess = effective_sample_size(log_w)
    need = ess < resample_threshold * n
    if bool(need.any()):
        idx = systematic_resample(log_w.detach(), resample_u)
        keep = torch.arange(n).expand(b, n)
        idx = torch.where(need.unsqueeze(-1), idx, keep)
        states = torch.gather(states, 1, idx.unsqueeze(-1).expand(-1, -1, states.shape[-1]))
        uniform = torch.full_like(log_w, -torch.log(torch.tensor(float(n))))
        log_w = torch.where(need.unsqueeze(-1), uniform, log_w)
    return states, log_w, need
