"""The three-stage filter training procedure.

Stage 1 trains the proposal alone on one-step-ahead prediction with a
single particle. Stage 2 unrolls the full filter over 100-step windows by
backpropagation through time (stop-gradient resampling). The in-loop stage
alternates collecting rollouts with the current filter feeding the policy
and brief retraining, until in-loop data reaches half the offline data.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch

from .cube import CubeFilter, NOISE_DIM, estimate, init_particles
from .dataset import SequenceDataset, collect_sequences
from .loss import FilterLossConfig, component_errors, filter_loss
from .particles import FilterCollapsed

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


class InLoopCollapse(RuntimeError):
    """Success rate fell below the collection threshold during in-loop."""


@dataclass
class FilterTrainConfig:
    lr: float = 1e-3
    batch_size: int = 256
    max_epochs: int = 200
    convergence_epochs: int = 5
    convergence_improvement: float = 0.01
    seq_len: int = 100
    batch_sequences: int = 6
    stage2_epochs: int = 20
    stage2_windows_per_epoch: int = 60
    bias_pos: float = 0.005
    bias_rot: float = 0.05
    inloop_epochs: int = 2
    inloop_batch_frames: int = 5000
    collapse_threshold: float = 0.05
    loss: FilterLossConfig = FilterLossConfig()


# ----------------------------------------------------------------------
# stage 1: one-step proposal training


def _stage1_tensors(ds: SequenceDataset, dtype=torch.float32):
    prev, z, u, nxt = [], [], [], []
    for ep in ds.episodes:
        if len(ep) < 2:
            continue
        prev.append(ep.s[:-1])
        nxt.append(ep.s[1:])
        z.append(ep.z[1:])
        u.append(ep.u[1:])
    cat = lambda xs: torch.as_tensor(np.concatenate(xs), dtype=dtype)
    return cat(prev), cat(z), cat(u), cat(nxt)


def stage1_predict(models, s_prev, z, u, eps, deterministic=False):
    """One-step single-particle prediction for a batch of samples."""
    states = s_prev.unsqueeze(1)
    pred = models.proposal.propagate(states, z, u, eps, deterministic=deterministic)
    return pred.squeeze(1)


def evaluate_stage1(models: CubeFilter, ds: SequenceDataset, loss_cfg=None) -> float:
    """Deterministic (mean-proposal) one-step prediction loss over a dataset."""
    loss_cfg = loss_cfg or FilterLossConfig()
    s_prev, z, u, s_next = _stage1_tensors(ds)
    with torch.no_grad():
        eps = torch.zeros(s_prev.shape[0], 1, NOISE_DIM)
        pred = stage1_predict(models, s_prev, z, u, eps, deterministic=True)
        return float(filter_loss(pred, s_next, loss_cfg).item())


def identity_baseline_loss(ds: SequenceDataset, loss_cfg=None) -> float:
    """Loss of predicting no motion at all: the stage-1 reference point."""
    loss_cfg = loss_cfg or FilterLossConfig()
    s_prev, _, _, s_next = _stage1_tensors(ds)
    return float(filter_loss(s_prev, s_next, loss_cfg).item())


def train_stage1(
    models: CubeFilter,
    train_ds: SequenceDataset,
    val_ds: SequenceDataset,
    cfg: FilterTrainConfig | None = None,
    seed: int = 0,
) -> dict:
    """Optimize the proposal for 1-step-ahead prediction (T=1, N=1) until
    the validation objective stops improving by 1% for five epochs.

    Convergence is judged on the sampled objective with frozen validation
    noise (the quantity actually optimized); the best-validation weights
    are restored at the end.
    """
    cfg = cfg or FilterTrainConfig()
    s_prev, z, u, s_next = _stage1_tensors(train_ds)
    vs_prev, vz, vu, vs_next = _stage1_tensors(val_ds)
    n = s_prev.shape[0]
    opt = torch.optim.Adam(models.proposal.parameters(), lr=cfg.lr)
    gen = torch.Generator().manual_seed(seed)
    rng = np.random.default_rng(seed)
    val_eps = torch.randn(
        vs_prev.shape[0], 1, NOISE_DIM, generator=torch.Generator().manual_seed(seed + 7)
    )

    def val_objective() -> float:
        with torch.no_grad():
            pred = stage1_predict(models, vs_prev, vz, vu, val_eps)
            return float(filter_loss(pred, vs_next, cfg.loss).item())

    history = {"train": [], "val": []}
    best = float("inf")
    best_state = {k: v.detach().clone() for k, v in models.proposal.state_dict().items()}
    since_best = 0
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        total = 0.0
        batches = 0
        for k in range(0, n, cfg.batch_size):
            idx = order[k : k + cfg.batch_size]
            bi = torch.as_tensor(idx)
            eps = torch.randn(len(idx), 1, NOISE_DIM, generator=gen)
            pred = stage1_predict(models, s_prev[bi], z[bi], u[bi], eps)
            loss = filter_loss(pred, s_next[bi], cfg.loss)
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"stage-1 loss non-finite at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.item())
            batches += 1
        val = val_objective()
        history["train"].append(total / max(batches, 1))
        history["val"].append(val)
        if val < best:
            best_state = {
                k: v.detach().clone() for k, v in models.proposal.state_dict().items()
            }
        if val < best * (1.0 - cfg.convergence_improvement):
            best = val
            since_best = 0
        else:
            best = min(best, val)
            since_best += 1
            if since_best >= cfg.convergence_epochs:
                break
    models.proposal.load_state_dict(best_state)
    return history


# ----------------------------------------------------------------------
# stage 2: backpropagation through the filtering recursion


def _sample_window(ep, seq_len, rng):
    start = int(rng.integers(0, len(ep) - seq_len))
    return (
        ep.s[start : start + seq_len + 1],
        ep.z[start + 1 : start + seq_len + 1],
        ep.u[start + 1 : start + seq_len + 1],
    )


def _windows(ds: SequenceDataset, n: int, seq_len: int, rng) -> list:
    eligible = [ep for ep in ds.episodes if len(ep) > seq_len]
    if not eligible:
        raise ValueError(f"no episodes longer than {seq_len} frames")
    out = []
    for _ in range(n):
        ep = eligible[int(rng.integers(0, len(eligible)))]
        out.append(_sample_window(ep, seq_len, rng))
    return out


def rollout_filter_loss(
    models: CubeFilter,
    windows,
    n_particles: int,
    cfg: FilterTrainConfig,
    generator: torch.Generator,
    with_grad: bool,
):
    """Unrolled filter loss over a batch of windows; the heart of stage 2."""
    from ..env.environment import CubeState

    sigma = models.data_sigma if models.data_sigma is not None else np.array(
        [0.005, 0.005, 0.005, 0.05, 0.02, 0.02, 0.02, 0.1, 0.1, 0.1]
    )
    sig = (float(np.mean(sigma[0:3])), float(sigma[3]), float(np.mean(sigma[4:7])),
           float(np.mean(sigma[7:10])))
    losses = []
    ctx = torch.enable_grad() if with_grad else torch.no_grad()
    with ctx:
        for s_seq, z_seq, u_seq in windows:
            truth = torch.as_tensor(s_seq[1:], dtype=torch.float32)
            # deterministic bias draw from the torch generator
            b = (torch.rand(6, generator=generator) * 2.0 - 1.0).numpy()
            bias = np.concatenate([b[0:3] * cfg.bias_pos, b[3:6] * cfg.bias_rot])
            states = init_particles(
                CubeState.from_vector(s_seq[0]), n_particles, sig, generator, bias=bias
            )
            log_w = torch.full((1, n_particles), -float(np.log(n_particles)))
            preds = []
            for t in range(truth.shape[0]):
                z = torch.as_tensor(z_seq[t], dtype=torch.float32)
                u = torch.as_tensor(u_seq[t], dtype=torch.float32)
                eps = torch.randn((1, n_particles, NOISE_DIM), generator=generator)
                ru = torch.rand(1, generator=generator)
                states, log_w, _ = models.step(states, log_w, z, u, eps, ru)
                preds.append(estimate(states, log_w)[0])
            losses.append(filter_loss(torch.stack(preds), truth, cfg.loss))
    return torch.stack(losses).mean()


def evaluate_filter(
    models: CubeFilter,
    ds: SequenceDataset,
    cfg: FilterTrainConfig | None = None,
    seed: int = 0,
    n_windows: int = 12,
    n_particles: int | None = None,
) -> float:
    """Full-filter rollout loss on windows drawn deterministically from ds."""
    cfg = cfg or FilterTrainConfig()
    rng = np.random.default_rng(seed)
    gen = torch.Generator().manual_seed(seed)
    n = n_particles or models.cfg.n_particles_train
    windows = _windows(ds, n_windows, cfg.seq_len, rng)
    return float(rollout_filter_loss(models, windows, n, cfg, gen, with_grad=False).item())


def train_stage2(
    models: CubeFilter,
    train_ds: SequenceDataset,
    val_ds: SequenceDataset,
    cfg: FilterTrainConfig | None = None,
    seed: int = 0,
    val_seed: int = 777,
    val_windows: int = 10,
) -> dict:
    """Backpropagation through time over seq_len-step unrolls, optimizing
    both the proposal and the update model.

    The rollout loss is noisy and over-training degrades it, so each epoch
    is scored on a fixed set of validation windows and the best-scoring
    weights (including the pre-training ones) are restored at the end. The
    already-trained proposal moves at a fifth of the update model's rate.
    """
    cfg = cfg or FilterTrainConfig()
    if models.data_sigma is None:
        models.data_sigma = train_ds.state_sigma()
    params = list(models.proposal.parameters()) + list(models.update.parameters())
    opt = torch.optim.Adam(
        [
            {"params": list(models.proposal.parameters()), "lr": 0.2 * cfg.lr},
            {"params": list(models.update.parameters()), "lr": cfg.lr},
        ]
    )
    rng = np.random.default_rng(seed)
    gen = torch.Generator().manual_seed(seed + 1)
    n = models.cfg.n_particles_train

    def snapshot():
        return (
            {k: v.detach().clone() for k, v in models.proposal.state_dict().items()},
            {k: v.detach().clone() for k, v in models.update.state_dict().items()},
        )

    def val_loss():
        return evaluate_filter(models, val_ds, cfg, seed=val_seed, n_windows=val_windows)

    best = val_loss()
    best_state = snapshot()
    history = {"train": [], "val": [best]}
    since_best = 0
    for epoch in range(cfg.stage2_epochs):
        total, batches = 0.0, 0
        for _ in range(max(1, cfg.stage2_windows_per_epoch // cfg.batch_sequences)):
            windows = _windows(train_ds, cfg.batch_sequences, cfg.seq_len, rng)
            try:
                loss = rollout_filter_loss(models, windows, n, cfg, gen, with_grad=True)
            except FilterCollapsed:
                log.warning("filter collapsed in a stage-2 batch; skipped")
                continue
            opt.zero_grad()
            loss.backward()
            grads_finite = all(
                p.grad is None or bool(torch.isfinite(p.grad).all()) for p in params
            )
            if not grads_finite or not torch.isfinite(loss):
                log.warning("non-finite stage-2 gradients at epoch %d; batch skipped", epoch)
                opt.zero_grad()
                continue
            torch.nn.utils.clip_grad_norm_(params, 10.0)
            opt.step()
            total += float(loss.item())
            batches += 1
        val = val_loss()
        history["train"].append(total / max(batches, 1))
        history["val"].append(val)
        if val < best:
            best = val
            best_state = snapshot()
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.convergence_epochs:
                break
    models.proposal.load_state_dict(best_state[0])
    models.update.load_state_dict(best_state[1])
    return history


# ----------------------------------------------------------------------
# in-loop refinement


def train_inloop(
    models: CubeFilter,
    policy,
    offline_ds: SequenceDataset,
    pool_factory,
    cfg: FilterTrainConfig | None = None,
    seed: int = 0,
    eval_fn=None,
) -> dict:
    """Iteratively collect rollouts with the current filter feeding the
    policy, append the data, and retrain briefly; stops when in-loop frames
    reach exactly half the offline frames.

    pool_factory(models, iteration) must build a collection pool whose
    policy-side observations come from a RunningFilter over `models`.
    eval_fn(models, iteration) -> dict of error metrics is recorded per
    iteration (including iteration 0, before any in-loop data).
    """
    cfg = cfg or FilterTrainConfig()
    offline_frames = offline_ds.n_frames
    target = offline_frames // 2
    combined = SequenceDataset(list(offline_ds.episodes), dict(offline_ds.meta))
    rng = np.random.default_rng(seed)

    history = {
        "iterations": [],
        "inloop_frames": 0,
        "offline_frames": offline_frames,
        "eval": [],
    }
    if eval_fn is not None:
        history["eval"].append(eval_fn(models, 0))

    inloop_frames = 0
    iteration = 0
    while inloop_frames < target:
        iteration += 1
        want = min(cfg.inloop_batch_frames, target - inloop_frames)
        pool = pool_factory(models, iteration)
        batch = collect_sequences(pool, policy, want, meta={"source": "inloop"})
        if pool.success_rate < cfg.collapse_threshold and len(pool._attempts) >= 20:
            raise InLoopCollapse(
                f"success rate {pool.success_rate:.3f} below "
                f"{cfg.collapse_threshold} at in-loop iteration {iteration}"
            )
        inloop_frames += batch.n_frames
        combined.extend(batch)

        train, val = combined.split(0.15, np.random.default_rng(seed + iteration))
        sub = FilterTrainConfig(**{**cfg.__dict__, "stage2_epochs": cfg.inloop_epochs})
        train_stage2(models, train, val, sub, seed=seed + 1000 + iteration)

        entry = {"iteration": iteration, "collected": batch.n_frames,
                 "inloop_total": inloop_frames}
        if eval_fn is not None:
            history["eval"].append(eval_fn(models, iteration))
        history["iterations"].append(entry)

    history["inloop_frames"] = inloop_frames
    return history
