"""Per-episode domain randomization: sampling, supports, and overrides."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Any, Mapping

import numpy as np

# Documented support of each randomized parameter. Overrides outside these
# ranges are rejected; the benchmark relies on pinning values inside them.
SUPPORTS: dict[str, tuple[float, float]] = {
    "q_offset": (-0.04, 0.04),
    "eta_lat": (0.81, 0.99),
    "eta_spin": (2e-4, 2e-2),
    "cube_mass": (0.08, 0.12),
    "cube_size": (0.076, 0.084),
    "sticky_prob": (0.0, 1.0),
    "gravity_scale": (0.0, 1.0),
    "sigma_q": (0.0, np.inf),
    "sigma_x": (0.0, np.inf),
    "sigma_rot": (0.0, np.inf),
    "k_p": (1.6, 2.4),
    "k_d": (0.04, 0.06),
}


@dataclass
class DomainConfig:
    """One sampled realization of every per-episode randomized parameter.

    Per-step sensor noise scales (sigma_*) ride along so stages can switch
    them off; they affect observation copies only, never the true state.
    """

    q_offset: np.ndarray = field(default_factory=lambda: np.zeros(12))
    eta_lat: float = 0.9
    eta_spin: float = 2e-3
    cube_mass: float = 0.1
    cube_size: float = 0.08
    sticky_prob: float = 0.1
    gravity_scale: float = 1.0
    sigma_q: float = 0.02
    sigma_x: float = 0.01
    sigma_rot: float = 0.2
    k_p: float = 2.0
    k_d: float = 0.05

    def validate(self) -> "DomainConfig":
        for f in fields(self):
            lo, hi = SUPPORTS[f.name]
            vals = np.atleast_1d(np.asarray(getattr(self, f.name), dtype=float))
            if np.any(vals < lo) or np.any(vals > hi) or not np.all(np.isfinite(vals)):
                raise ValueError(
                    f"domain parameter {f.name}={getattr(self, f.name)} outside "
                    f"support [{lo}, {hi}]"
                )
        if np.asarray(self.q_offset).shape != (12,):
            raise ValueError("q_offset must have shape (12,)")
        return self

    def to_dict(self) -> dict[str, Any]:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["q_offset"] = [float(v) for v in self.q_offset]
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "DomainConfig":
        kw = dict(d)
        kw["q_offset"] = np.asarray(kw["q_offset"], dtype=float)
        return cls(**kw).validate()


def effective_spinning_friction(cfg: DomainConfig) -> float:
    """Effective torsional friction coefficient at the fingertip contacts."""
    return cfg.eta_spin * cfg.eta_lat / 0.9


def sample_domain(
    rng: np.random.Generator, overrides: Mapping[str, Any] | None = None
) -> DomainConfig:
    """Draw a DomainConfig; `overrides` pins fields (benchmark protocol).

    Sampling: q_offset ~ U(-0.04, 0.04) per joint, eta_lat ~ U(0.81, 0.99),
    eta_spin ~ LogU(2e-4, 2e-2), cube mass +-20% and size +-5% uniform
    around nominal, controller gains +-20% uniform. Overridden fields pass
    through unchanged after a range check.
    """
    overrides = dict(overrides or {})
    unknown = set(overrides) - set(SUPPORTS)
    if unknown:
        raise ValueError(f"unknown domain override(s): {sorted(unknown)}")

    cfg = DomainConfig(
        q_offset=rng.uniform(-0.04, 0.04, size=12),
        eta_lat=float(rng.uniform(0.81, 0.99)),
        eta_spin=float(np.exp(rng.uniform(np.log(2e-4), np.log(2e-2)))),
        cube_mass=float(0.1 * rng.uniform(0.8, 1.2)),
        cube_size=float(0.08 * rng.uniform(0.95, 1.05)),
    )
    for name, value in overrides.items():
        if name == "q_offset":
            value = np.asarray(value, dtype=float)
        setattr(cfg, name, value)
    return cfg.validate()
