"""Fixed physical constants of the surrogate hand and the kernel parameter
vector layout shared by the compiled and pure-Python substep kernels."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import DomainConfig, effective_spinning_friction


@dataclass(frozen=True)
class PhysicsParams:
    """Geometry, contact and integrator constants (not randomized)."""

    # four identical 3-link fingers on a square palm facing down
    link_lengths: tuple[float, float, float] = (0.05, 0.04, 0.03)
    palm_side: float = 0.12
    palm_z: float = 0.12
    tip_radius: float = 0.008
    support_z: float = -0.04

    # compliant point contacts; Coulomb friction via anchored tangential
    # springs (static-capable and stable at 1 ms substeps, unlike a pure
    # velocity regularization), capped at the cone
    contact_stiffness: float = 5000.0
    contact_damping: float = 10.0
    friction_stiffness: float = 1000.0
    friction_damping: float = 10.0
    torsion_stiffness: float = 0.5
    torsion_damping: float = 0.01

    # joint-limit penalty and joint dynamics
    limit_stiffness: float = 50.0
    limit_damping: float = 0.5
    joint_inertia: float = 1e-3
    tau_max: float = 0.4

    # random external pushes on the cube, resampled each policy step
    perturb_force_std: float = 0.2
    perturb_torque_std: float = 2e-3

    # integrator
    dt: float = 1e-3
    substeps_per_policy_step: int = 100
    substeps_per_frame: int = 10  # 100 Hz estimator frames

    # joint ranges: q1 (spread), q2, q3 per finger
    q1_range: tuple[float, float] = (-0.2, 1.4)
    q23_range: tuple[float, float] = (-0.1, 1.5)

    def joint_limits(self) -> tuple[np.ndarray, np.ndarray]:
        qmin = np.tile([self.q1_range[0], self.q23_range[0], self.q23_range[0]], 4)
        qmax = np.tile([self.q1_range[1], self.q23_range[1], self.q23_range[1]], 4)
        return qmin.astype(np.float64), qmax.astype(np.float64)

    def mounts(self) -> np.ndarray:
        """Finger base positions on the palm underside, shape (4, 3)."""
        o = self.palm_side / 2.0
        return np.array(
            [
                [o, 0.0, self.palm_z],
                [-o, 0.0, self.palm_z],
                [0.0, o, self.palm_z],
                [0.0, -o, self.palm_z],
            ],
            dtype=np.float64,
        )

    def inward(self) -> np.ndarray:
        """Unit vectors from each mount toward the palm center, shape (4, 3)."""
        return np.array(
            [
                [-1.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, -1.0, 0.0],
                [0.0, 1.0, 0.0],
            ],
            dtype=np.float64,
        )


# Parameter-vector slots consumed by both kernel lanes. Order is load-bearing.
P_KP = 0
P_KD = 1
P_TAU_MAX = 2
P_ETA_LAT = 3
P_ETA_SPIN_EFF = 4
P_CUBE_MASS = 5
P_CUBE_HALF = 6
P_GRAVITY = 7  # signed z acceleration, m/s^2
P_JOINT_INERTIA = 8
P_KN = 9
P_CN = 10
P_KT = 11
P_CT = 12
P_KLIM = 13
P_CLIM = 14
P_L1 = 15
P_L2 = 16
P_L3 = 17
P_TIP_RADIUS = 18
P_PALM_Z = 19
P_SUPPORT_Z = 20
P_SUPPORT_ON = 21
P_PALM_ON = 22
P_DT = 23
P_KPSI = 24
P_CPSI = 25
P_SIZE = 26

# Friction anchor slots: tips 0..3, palm corners 4..11, support corners 12..19.
N_ANCHORS = 20
A_TIP = 0
A_PALM = 4
A_SUPPORT = 12

# Energy ledger channel slots (joules, accumulated across kernel calls).
E_ACTUATOR = 0
E_LIMIT = 1
E_CONTACT_JOINTS = 2
E_GRAVITY = 3
E_PERTURBATION = 4
E_CONTACT_CUBE = 5
E_SIZE = 6

# Per-call diagnostics slots (zeroed by the kernel on entry).
D_CONE_LAT = 0  # max |F_t| - eta_lat*F_n over substeps/contacts
D_CONE_SPIN = 1  # max |tau_spin| - eta_eff*F_n
D_TIP_CONTACT_0 = 2  # substeps with contact, fingers 0..3 -> slots 2..5
D_PALM_CONTACTS = 6
D_SUPPORT_CONTACTS = 7
D_MAX_TIP_NORMAL_Z = 8  # max |n_z| over fingertip contacts
D_TIP_FORCE_0 = 9  # normal force summed over substeps, fingers 0..3 -> slots 9..12
D_SIZE = 13


def pack_params(
    phys: PhysicsParams,
    cfg: DomainConfig,
    support_on: bool,
    palm_on: bool = True,
) -> np.ndarray:
    p = np.zeros(P_SIZE, dtype=np.float64)
    p[P_KP] = cfg.k_p
    p[P_KD] = cfg.k_d
    p[P_TAU_MAX] = phys.tau_max
    p[P_ETA_LAT] = cfg.eta_lat
    p[P_ETA_SPIN_EFF] = effective_spinning_friction(cfg)
    p[P_CUBE_MASS] = cfg.cube_mass
    p[P_CUBE_HALF] = cfg.cube_size / 2.0
    p[P_GRAVITY] = -9.81 * cfg.gravity_scale
    p[P_JOINT_INERTIA] = phys.joint_inertia
    p[P_KN] = phys.contact_stiffness
    p[P_CN] = phys.contact_damping
    p[P_KT] = phys.friction_stiffness
    p[P_CT] = phys.friction_damping
    p[P_KPSI] = phys.torsion_stiffness
    p[P_CPSI] = phys.torsion_damping
    p[P_KLIM] = phys.limit_stiffness
    p[P_CLIM] = phys.limit_damping
    p[P_L1], p[P_L2], p[P_L3] = phys.link_lengths
    p[P_TIP_RADIUS] = phys.tip_radius
    p[P_PALM_Z] = phys.palm_z
    p[P_SUPPORT_Z] = phys.support_z
    p[P_SUPPORT_ON] = 1.0 if support_on else 0.0
    p[P_PALM_ON] = 1.0 if palm_on else 0.0
    p[P_DT] = phys.dt
    return p
