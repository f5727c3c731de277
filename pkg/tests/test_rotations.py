import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from reorient import rotations as rot


def rand_rotations(n, seed=0):
    rng = np.random.default_rng(seed)
    return [rot.random_rotation(rng) for _ in range(n)]


quat_components = st.lists(
    st.floats(min_value=-1.0, max_value=1.0, allow_nan=False), min_size=4, max_size=4
).filter(lambda q: sum(c * c for c in q) > 1e-6)


class TestRotationBasics:
    def test_constructor_normalizes_and_canonicalizes(self):
        r = rot.Rotation(-2.0, 0.0, 0.0, 2.0)
        assert r.norm() == pytest.approx(1.0, abs=1e-12)
        assert r.w >= 0.0

    def test_w_zero_tie_break(self):
        r = rot.Rotation(0.0, -1.0, 0.0, 0.0)
        assert (r.w, r.x, r.y, r.z) == (0.0, 1.0, 0.0, 0.0)
        r2 = rot.Rotation(0.0, 0.0, 0.0, -1.0)
        assert r2.z == 1.0

    @given(quat_components)
    def test_unit_norm_invariant(self, q):
        r = rot.Rotation(*q)
        assert abs(r.norm() - 1.0) < 1e-9

    def test_degenerate_rejected(self):
        with pytest.raises(ValueError):
            rot.Rotation(0.0, 0.0, 0.0, 0.0)


class TestCompose:
    def test_identity_left(self):
        for r in rand_rotations(20, seed=1):
            assert rot.distance(rot.compose(rot.IDENTITY, r), r) < 1e-12

    def test_quarter_turns_add(self):
        rz90 = rot.from_axis_angle([0, 0, 1], math.pi / 2)
        rz180 = rot.from_axis_angle([0, 0, 1], math.pi)
        assert rot.distance(rot.compose(rz90, rz90), rz180) < 1e-12

    def test_group_closure_all_pairs(self):
        group = rot.octahedral_group()
        for gi in group:
            for gj in group:
                c = rot.compose(gi, gj)
                k = group.nearest_index(c)
                assert rot.distance(c, group[k]) < 1e-9

    @given(quat_components, quat_components)
    @settings(max_examples=50)
    def test_compose_preserves_norm(self, qa, qb):
        c = rot.compose(rot.Rotation(*qa), rot.Rotation(*qb))
        assert abs(c.norm() - 1.0) < 1e-9


class TestDistance:
    def test_self_distance_zero(self):
        for r in rand_rotations(20, seed=2):
            assert rot.distance(r, r) == pytest.approx(0.0, abs=1e-6)

    def test_quarter_turn(self):
        assert rot.distance(
            rot.IDENTITY, rot.from_axis_angle([0, 0, 1], math.pi / 2)
        ) == pytest.approx(math.pi / 2, abs=1e-12)

    def test_symmetry_and_range(self):
        rs = rand_rotations(200, seed=3)
        for a, b in zip(rs[::2], rs[1::2]):
            d1, d2 = rot.distance(a, b), rot.distance(b, a)
            assert d1 == pytest.approx(d2, abs=1e-12)
            assert 0.0 <= d1 <= math.pi + 1e-12

    def test_triangle_inequality_random_triples(self):
        rng = np.random.default_rng(4)
        for _ in range(10_000):
            a, b, c = (rot.random_rotation(rng) for _ in range(3))
            assert rot.distance(a, b) <= rot.distance(a, c) + rot.distance(c, b) + 1e-9

    def test_right_invariance(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            a, b, g = (rot.random_rotation(rng) for _ in range(3))
            assert rot.distance(rot.compose(a, g), rot.compose(b, g)) == pytest.approx(
                rot.distance(a, b), abs=1e-9
            )


class TestOctahedralGroup:
    def test_has_24_elements(self):
        assert len(rot.octahedral_group()) == 24

    def test_contains_identity_and_inverses(self):
        group = rot.octahedral_group()
        assert rot.distance(group[0], rot.IDENTITY) < 1e-12
        for g in group:
            assert group.contains(rot.inverse(g), tol=1e-9)

    def test_pairwise_distances_at_least_half_pi(self):
        group = rot.octahedral_group()
        for i, gi in enumerate(group):
            for j, gj in enumerate(group):
                if i != j:
                    assert rot.distance(gi, gj) >= math.pi / 2 - 1e-9

    def test_deterministic_ordering(self):
        a = rot.OctahedralGroup()
        b = rot.OctahedralGroup()
        for ga, gb in zip(a, b):
            assert ga == gb


class TestReduceSymmetry:
    def test_group_elements_collapse_to_identity(self):
        for g in rot.octahedral_group():
            assert rot.distance(rot.reduce_symmetry(g), rot.IDENTITY) < 1e-9

    def test_small_rotation_unchanged(self):
        r = rot.from_axis_angle([0, 0, 1], 0.1)
        assert rot.distance(rot.reduce_symmetry(r), r) < 1e-12

    def test_right_coset_invariance(self):
        rng = np.random.default_rng(6)
        group = rot.octahedral_group()
        for _ in range(200):
            r = rot.random_rotation(rng)
            base = rot.reduce_symmetry(r)
            for g in group:
                assert rot.distance(rot.reduce_symmetry(rot.compose(r, g)), base) < 1e-9

    def test_idempotent(self):
        rng = np.random.default_rng(7)
        for _ in range(2000):
            r = rot.random_rotation(rng)
            once = rot.reduce_symmetry(r)
            assert rot.distance(rot.reduce_symmetry(once), once) < 1e-9

    def test_result_angle_at_most_coset_minimum(self):
        rng = np.random.default_rng(8)
        group = rot.octahedral_group()
        for _ in range(100):
            r = rot.random_rotation(rng)
            reduced = rot.reduce_symmetry(r)
            angles = [rot.compose(r, g).angle for g in group]
            assert reduced.angle == pytest.approx(min(angles), abs=1e-12)


def haar_angle_mean():
    """Oracle: numerically integrate theta * (1 - cos theta) / pi on [0, pi]."""
    val, _ = integrate.quad(lambda t: t * (1.0 - math.cos(t)) / math.pi, 0.0, math.pi)
    return val


class TestRandomRotation:
    def test_unit_norm(self):
        rng = np.random.default_rng(9)
        for _ in range(1000):
            assert abs(rot.random_rotation(rng).norm() - 1.0) < 1e-9

    def test_mean_angle_matches_haar_density(self):
        expected = haar_angle_mean()  # = pi/2 + 2/pi ~ 2.2074
        assert expected == pytest.approx(math.pi / 2 + 2 / math.pi, abs=1e-9)
        rng = np.random.default_rng(10)
        angles = np.array(
            [rot.distance(rot.random_rotation(rng), rot.IDENTITY) for _ in range(100_000)]
        )
        assert float(angles.mean()) == pytest.approx(expected, abs=0.02)

    def test_angle_histogram_chi_squared(self):
        rng = np.random.default_rng(11)
        n = 100_000
        angles = np.array(
            [rot.distance(rot.random_rotation(rng), rot.IDENTITY) for _ in range(n)]
        )
        edges = np.linspace(0.0, math.pi, 21)
        observed, _ = np.histogram(angles, bins=edges)
        cdf = (edges - np.sin(edges)) / math.pi  # integral of (1 - cos)/pi
        expected = n * np.diff(cdf)
        _, p = stats.chisquare(observed, expected)
        assert p > 0.01


class TestPerturbRotation:
    def test_zero_sigma_identity(self):
        rng = np.random.default_rng(12)
        r = rot.random_rotation(rng)
        assert rot.perturb_rotation(r, 0.0, rng) == r

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            rot.perturb_rotation(rot.IDENTITY, -0.1, np.random.default_rng(0))

    def test_mean_perturbation_angle_folded_normal(self):
        sigma = 0.2
        expected = sigma * math.sqrt(2.0 / math.pi)  # E|N(0, sigma)| = 0.15958
        rng = np.random.default_rng(13)
        r = rot.random_rotation(rng)
        d = np.array(
            [rot.distance(r, rot.perturb_rotation(r, sigma, rng)) for _ in range(100_000)]
        )
        assert float(d.mean()) == pytest.approx(expected, abs=0.005)

    def test_unit_norm(self):
        rng = np.random.default_rng(14)
        r = rot.random_rotation(rng)
        for _ in range(100):
            assert abs(rot.perturb_rotation(r, 0.3, rng).norm() - 1.0) < 1e-9


class TestGoalSet:
    def test_goal_3_is_identity(self):
        goals = rot.GoalSet()
        assert goals.goal(3) == rot.IDENTITY

    def test_same_element_set_as_group(self):
        goals = rot.GoalSet()
        group = rot.octahedral_group()
        assert len(goals) == 24
        for g in goals:
            assert group.contains(g, tol=1e-12)
        assert len({g for g in goals}) == 24

    def test_index_bounds(self):
        goals = rot.GoalSet()
        with pytest.raises(IndexError):
            goals.goal(0)
        with pytest.raises(IndexError):
            goals.goal(25)


class TestSerialization:
    def test_array_round_trip(self):
        for r in rand_rotations(20, seed=15):
            back = rot.from_array(r.as_array())
            assert back == r

    def test_rotate_matches_composition(self):
        rng = np.random.default_rng(16)
        for _ in range(50):
            a, b = rot.random_rotation(rng), rot.random_rotation(rng)
            v = rng.standard_normal(3)
            lhs = rot.rotate(rot.compose(a, b), v)
            rhs = rot.rotate(a, rot.rotate(b, v))
            np.testing.assert_allclose(lhs, rhs, atol=1e-12)
