"""Filter training data: 100 Hz (z, u, s_true) sequences with metadata."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class Episode:
    z: np.ndarray  # (T, 24) measured joint angles and velocities
    u: np.ndarray  # (T, 12) commanded joint targets
    s: np.ndarray  # (T, 13) true cube states

    def __len__(self):
        return self.z.shape[0]


@dataclass
class SequenceDataset:
    episodes: list[Episode] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def n_frames(self) -> int:
        return sum(len(e) for e in self.episodes)

    def extend(self, other: "SequenceDataset") -> None:
        self.episodes.extend(other.episodes)

    def split(self, val_fraction: float, rng: np.random.Generator):
        idx = rng.permutation(len(self.episodes))
        n_val = max(1, int(len(idx) * val_fraction))
        val = SequenceDataset([self.episodes[i] for i in idx[:n_val]], dict(self.meta))
        train = SequenceDataset([self.episodes[i] for i in idx[n_val:]], dict(self.meta))
        return train, val

    def trim_frames(self, max_frames: int) -> "SequenceDataset":
        """Keep episodes (clipping the last) so the total is exactly max_frames."""
        out = []
        left = max_frames
        for ep in self.episodes:
            if left <= 0:
                break
            take = min(len(ep), left)
            out.append(Episode(ep.z[:take], ep.u[:take], ep.s[:take]))
            left -= take
        return SequenceDataset(out, dict(self.meta))

    def state_sigma(self) -> np.ndarray:
        """Training-data spread used for stage-2 particle initialization:
        [x(3) std, rotation RMS angle from episode start, v(3) std, w(3) std]."""
        xs = np.concatenate([e.s[:, 0:3] for e in self.episodes])
        vs = np.concatenate([e.s[:, 7:10] for e in self.episodes])
        ws = np.concatenate([e.s[:, 10:13] for e in self.episodes])
        angs = []
        for e in self.episodes:
            q0 = e.s[0, 3:7]
            dots = np.abs(e.s[:, 3:7] @ q0)
            angs.append(2.0 * np.arccos(np.clip(dots, -1.0, 1.0)))
        ang_rms = float(np.sqrt(np.mean(np.concatenate(angs) ** 2)))
        return np.array([*xs.std(axis=0), ang_rms, *vs.std(axis=0), *ws.std(axis=0)])


def save_dataset(ds: SequenceDataset, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, ep in enumerate(ds.episodes):
        np.savez_compressed(out / f"ep_{i:05d}.npz", z=ep.z, u=ep.u, s=ep.s)
    meta = dict(ds.meta)
    meta.update({"n_episodes": len(ds.episodes), "n_frames": ds.n_frames})
    (out / "meta.json").write_text(json.dumps(meta, indent=2))


def load_dataset(in_dir: str | Path) -> SequenceDataset:
    src = Path(in_dir)
    files = sorted(src.glob("ep_*.npz"))
    if not files:
        raise FileNotFoundError(f"no episode files in {src}")
    eps = []
    for f in files:
        with np.load(f) as d:
            eps.append(Episode(d["z"].copy(), d["u"].copy(), d["s"].copy()))
    meta = {}
    mf = src / "meta.json"
    if mf.exists():
        meta = json.loads(mf.read_text())
    return SequenceDataset(eps, meta)


def collect_sequences(pool, policy, n_frames: int, meta: dict | None = None) -> SequenceDataset:
    """Roll the pool's workers and record 100 Hz frames until at least
    n_frames are stored; the result is trimmed to exactly n_frames."""
    buffers: dict[int, dict[str, list]] = {}
    episodes: list[Episode] = []

    def flush(idx):
        buf = buffers.pop(idx, None)
        if buf and buf["z"]:
            episodes.append(
                Episode(
                    np.concatenate(buf["z"]),
                    np.concatenate(buf["u"]),
                    np.concatenate(buf["s"]),
                )
            )

    def on_step(idx, res, action, reward, event):
        buf = buffers.setdefault(idx, {"z": [], "u": [], "s": []})
        buf["z"].append(res.info["frames_z"].copy())
        buf["u"].append(res.info["frames_u"].copy())
        buf["s"].append(res.info["frames_s"].copy())
        if event not in ("none", "success"):
            flush(idx)

    frames_per_step = 10
    steps = (n_frames + frames_per_step - 1) // frames_per_step
    pool.collect(policy, None, steps, on_step=on_step)
    for idx in sorted(list(buffers)):
        flush(idx)
    ds = SequenceDataset(episodes, meta or {})
    return ds.trim_frames(n_frames)
