"""Episode logs: JSONL, one header record then one record per policy step."""

from __future__ import annotations

import json
from pathlib import Path
from typing import IO, Any

from .. import rotations as rot
from .domain import DomainConfig
from .environment import CubeState


class EpisodeLogger:
    """Streams episode records to a JSONL file.

    Header carries the domain configuration; step records carry the
    Table-style fields {t, q, q_bar, cube_true, cube_est, action, reward,
    event}.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh: IO[str] | None = self.path.open("w")

    def header(
        self,
        cfg: DomainConfig,
        goal: rot.Rotation,
        seed: int | None = None,
        extra: dict[str, Any] | None = None,
    ) -> None:
        rec = {
            "type": "header",
            "domain": cfg.to_dict(),
            "goal": goal.as_list(),
            "seed": seed,
        }
        if extra:
            rec.update(extra)
        self._write(rec)

    def step(
        self,
        t: float,
        q,
        q_bar,
        cube_true: CubeState,
        action,
        reward: float,
        event: str,
        cube_est: CubeState | None = None,
    ) -> None:
        rec = {
            "type": "step",
            "t": round(t, 6),
            "q": [float(v) for v in q],
            "q_bar": [float(v) for v in q_bar],
            "cube_true": cube_true.to_dict(),
            "cube_est": cube_est.to_dict() if cube_est is not None else None,
            "action": [float(v) for v in action],
            "reward": float(reward),
            "event": event,
        }
        self._write(rec)

    def _write(self, rec: dict) -> None:
        assert self._fh is not None, "logger closed"
        self._fh.write(json.dumps(rec) + "\n")

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_episode(path: str | Path) -> tuple[dict, list[dict]]:
    """Parse one episode file into (header, steps)."""
    header = None
    steps = []
    with Path(path).open() as fh:
        for line in fh:
            rec = json.loads(line)
            if rec["type"] == "header":
                header = rec
            else:
                steps.append(rec)
    if header is None:
        raise ValueError(f"{path}: missing header record")
    return header, steps
