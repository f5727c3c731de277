"""Quaternion rotation algebra, the cube symmetry group, and goal enumeration.

Rotations are unit quaternions stored in (w, x, y, z) order and kept on the
canonical hemisphere (w >= 0, ties broken by the first nonzero component
being positive), so every orientation has exactly one representation.
Serialized form is always the four-element list [w, x, y, z].
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

_NORM_TOL = 1e-9


class Rotation:
    """An element of SO(3) as a canonicalized unit quaternion."""

    __slots__ = ("w", "x", "y", "z")

    def __init__(self, w: float, x: float, y: float, z: float):
        n2 = w * w + x * x + y * y + z * z
        if not math.isfinite(n2) or n2 < 1e-24:
            raise ValueError(f"degenerate quaternion ({w}, {x}, {y}, {z})")
        # Skip the divide when already unit so construction round-trips bitwise.
        if abs(n2 - 1.0) > 4e-12:
            n = math.sqrt(n2)
            w, x, y, z = w / n, x / n, y / n, z / n
        if w < 0.0 or (w == 0.0 and _first_nonzero_negative(x, y, z)):
            w, x, y, z = -w, -x, -y, -z
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)

    def __setattr__(self, name, value):
        raise AttributeError("Rotation is immutable")

    def __repr__(self):
        return f"Rotation({self.w:.9g}, {self.x:.9g}, {self.y:.9g}, {self.z:.9g})"

    def __eq__(self, other):
        if not isinstance(other, Rotation):
            return NotImplemented
        return (self.w, self.x, self.y, self.z) == (other.w, other.x, other.y, other.z)

    def __hash__(self):
        return hash((self.w, self.x, self.y, self.z))

    def as_array(self) -> np.ndarray:
        """Components as a float64 array [w, x, y, z]."""
        return np.array([self.w, self.x, self.y, self.z], dtype=np.float64)

    def as_list(self) -> list[float]:
        return [self.w, self.x, self.y, self.z]

    @property
    def angle(self) -> float:
        """Rotation angle in [0, pi]."""
        v = math.sqrt(self.x**2 + self.y**2 + self.z**2)
        return 2.0 * math.atan2(v, self.w)

    def norm(self) -> float:
        return math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)


def _first_nonzero_negative(*components: float) -> bool:
    for c in components:
        if c != 0.0:
            return c < 0.0
    return False


IDENTITY = Rotation(1.0, 0.0, 0.0, 0.0)


def from_array(a: Sequence[float] | np.ndarray) -> Rotation:
    """Build a Rotation from a [w, x, y, z] sequence (normalizing)."""
    w, x, y, z = (float(v) for v in a)
    return Rotation(w, x, y, z)


def from_axis_angle(axis: Sequence[float], angle: float) -> Rotation:
    """Rotation by `angle` radians about `axis` (need not be unit length)."""
    ax, ay, az = (float(v) for v in axis)
    n = math.sqrt(ax * ax + ay * ay + az * az)
    if n < 1e-15:
        if abs(angle) > 1e-15:
            raise ValueError("zero axis with nonzero angle")
        return IDENTITY
    half = 0.5 * angle
    s = math.sin(half) / n
    return Rotation(math.cos(half), ax * s, ay * s, az * s)


def to_axis_angle(r: Rotation) -> tuple[np.ndarray, float]:
    """Inverse of from_axis_angle; axis is arbitrary for the identity."""
    angle = r.angle
    s = math.sqrt(max(0.0, 1.0 - r.w * r.w))
    if s < 1e-12:
        return np.array([1.0, 0.0, 0.0]), 0.0
    return np.array([r.x / s, r.y / s, r.z / s]), angle


def compose(a: Rotation, b: Rotation) -> Rotation:
    """Hamilton product a*b: apply b first, then a."""
    return Rotation(
        a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
        a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
        a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
    )


def inverse(r: Rotation) -> Rotation:
    return Rotation(r.w, -r.x, -r.y, -r.z)


def distance(a: Rotation, b: Rotation) -> float:
    """Geodesic angle in [0, pi] between two orientations.

    Bi-invariant metric on SO(3), computed as 4*atan2(|a -+ b|, |a +- b|)
    with the sign chosen per hemisphere; well conditioned at both ends of
    the range, unlike the acos form.
    """
    dw, dx, dy, dz = a.w - b.w, a.x - b.x, a.y - b.y, a.z - b.z
    sw, sx, sy, sz = a.w + b.w, a.x + b.x, a.y + b.y, a.z + b.z
    dm = math.sqrt(dw * dw + dx * dx + dy * dy + dz * dz)
    sm = math.sqrt(sw * sw + sx * sx + sy * sy + sz * sz)
    return 4.0 * math.atan2(min(dm, sm), max(dm, sm))


def rotate(r: Rotation, v: Sequence[float] | np.ndarray) -> np.ndarray:
    """Apply the rotation to a 3-vector."""
    vx, vy, vz = (float(c) for c in v)
    # q * (0, v) * q^-1 expanded via the double-cross-product form.
    tx = 2.0 * (r.y * vz - r.z * vy)
    ty = 2.0 * (r.z * vx - r.x * vz)
    tz = 2.0 * (r.x * vy - r.y * vx)
    return np.array(
        [
            vx + r.w * tx + (r.y * tz - r.z * ty),
            vy + r.w * ty + (r.z * tx - r.x * tz),
            vz + r.w * tz + (r.x * ty - r.y * tx),
        ],
        dtype=np.float64,
    )


def random_rotation(rng: np.random.Generator) -> Rotation:
    """Haar-uniform sample on SO(3) (normalized 4-D Gaussian on S^3)."""
    while True:
        q = rng.standard_normal(4)
        n = float(np.dot(q, q))
        if n > 1e-12:
            return Rotation(q[0], q[1], q[2], q[3])


def perturb_rotation(r: Rotation, sigma: float, rng: np.random.Generator) -> Rotation:
    """Compose r with a rotation about a uniform random axis by N(0, sigma).

    With sigma == 0 the input is returned unchanged.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0.0:
        return r
    axis = rng.standard_normal(3)
    while float(np.dot(axis, axis)) < 1e-12:
        axis = rng.standard_normal(3)
    angle = float(rng.normal(0.0, sigma))
    return compose(from_axis_angle(axis, angle), r)


class OctahedralGroup:
    """The 24 rotational symmetries of the cube.

    Elements are generated by closing {Rx(pi/2), Ry(pi/2)} under composition
    and sorted deterministically by (rotation angle, w, x, y, z) so indices
    are stable across runs. Element 0 is the identity.
    """

    def __init__(self):
        self.elements: tuple[Rotation, ...] = tuple(_generate_octahedral())
        self._index = {r: i for i, r in enumerate(self.elements)}

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def __getitem__(self, i: int) -> Rotation:
        return self.elements[i]

    def nearest_index(self, r: Rotation) -> int:
        """Index of the group element closest to r (lowest index on ties)."""
        best_i, best_d = 0, math.inf
        for i, g in enumerate(self.elements):
            d = distance(r, g)
            if d < best_d - 1e-15:
                best_i, best_d = i, d
        return best_i

    def contains(self, r: Rotation, tol: float = 1e-9) -> bool:
        return any(distance(r, g) <= tol for g in self.elements)


def _generate_octahedral() -> list[Rotation]:
    gens = [
        from_axis_angle([1.0, 0.0, 0.0], math.pi / 2),
        from_axis_angle([0.0, 1.0, 0.0], math.pi / 2),
    ]
    elements = [IDENTITY]

    def _find(r: Rotation) -> bool:
        return any(distance(r, e) < 1e-6 for e in elements)

    frontier = [IDENTITY]
    while frontier:
        nxt = []
        for e in frontier:
            for g in gens:
                c = compose(e, g)
                if not _find(c):
                    elements.append(c)
                    nxt.append(c)
        frontier = nxt
    if len(elements) != 24:
        raise RuntimeError(f"octahedral closure produced {len(elements)} elements")
    # Snap components to exact multiples of 1/2 and 1/sqrt(2) to kill the
    # accumulation of composition round-off in the table itself.
    snapped = [_snap(e) for e in elements]
    snapped.sort(key=lambda r: (round(r.angle, 12), r.w, r.x, r.y, r.z))
    return snapped


def _snap(r: Rotation) -> Rotation:
    vals = (0.0, 0.5, -0.5, 1.0, -1.0, math.sqrt(0.5), -math.sqrt(0.5))
    out = []
    for c in (r.w, r.x, r.y, r.z):
        best = min(vals, key=lambda v: abs(v - c))
        if abs(best - c) > 1e-6:
            raise RuntimeError(f"octahedral element component {c} off-lattice")
        out.append(best)
    return Rotation(*out)


_GROUP: OctahedralGroup | None = None


def octahedral_group() -> OctahedralGroup:
    """Shared instance of the 24-element cube rotation group."""
    global _GROUP
    if _GROUP is None:
        _GROUP = OctahedralGroup()
    return _GROUP


def reduce_symmetry(r: Rotation) -> Rotation:
    """Canonical coset representative of r under cube symmetries.

    Returns r*g for the group element g minimizing the angle of r*g, i.e.
    the member of the right coset r*O closest to the identity. Ties are
    broken by the lowest group index.
    """
    group = octahedral_group()
    best: Rotation | None = None
    best_angle = math.inf
    for g in group.elements:
        c = compose(r, g)
        a = c.angle
        if a < best_angle - 1e-15:
            best, best_angle = c, a
    assert best is not None
    return best


class GoalSet:
    """The 24 goal orientations, indexed 1..24 with the identity at index 3.

    The underlying element set is exactly the octahedral group; only the
    numbering differs (the identity is pinned to slot 3, the remaining
    elements keep the group's deterministic order).
    """

    def __init__(self):
        group = octahedral_group()
        rest = [g for g in group.elements if g != IDENTITY]
        ordered = rest[:2] + [IDENTITY] + rest[2:]
        self.goals: tuple[Rotation, ...] = tuple(ordered)

    def __len__(self):
        return len(self.goals)

    def __iter__(self):
        return iter(self.goals)

    def goal(self, index: int) -> Rotation:
        """Goal by 1-based index (1..24)."""
        if not 1 <= index <= 24:
            raise IndexError(f"goal index {index} out of range 1..24")
        return self.goals[index - 1]

    def indices(self) -> range:
        return range(1, 25)
