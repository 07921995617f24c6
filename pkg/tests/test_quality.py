import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from hexwall.errors import InvalidSpecError
from hexwall.quality import (
    QualityReport,
    QualityThresholds,
    assess_hexes,
    assess_tets,
    hex_scaled_jacobians,
    quad_angles,
    quality_report,
    scaled_jacobian_hex,
    tri_angles,
    vol_skew_tet,
)
from hexwall.topology import HEX_NATURAL

from conftest import rotation_matrix, tube_wall

UNIT_CUBE = (HEX_NATURAL + 1.0) / 2.0
REGULAR_TET = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
RIGHT_TET = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)


def sheared_cube(angle_deg):
    p = UNIT_CUBE.copy()
    p[:, 0] += p[:, 1] / np.tan(np.radians(angle_deg))
    return p


def brute_scaled_jacobian(p):
    # corner c and its three edge-neighbours, ordered right-handed
    nb = {0: (1, 3, 4), 1: (2, 0, 5), 2: (3, 1, 6), 3: (0, 2, 7),
          4: (7, 5, 0), 5: (4, 6, 1), 6: (5, 7, 2), 7: (6, 4, 3)}
    vals = []
    for c, (a, b, d) in nb.items():
        m = np.array([p[a] - p[c], p[b] - p[c], p[d] - p[c]])
        m /= np.linalg.norm(m, axis=1, keepdims=True)
        vals.append(np.linalg.det(m))
    return min(vals)


def quad_from_angles(a_deg, b_deg, la=1.0, lb=1.3):
    """Planar quad whose first two corners have interior angles a_deg and b_deg."""
    a, b = np.radians(a_deg), np.radians(b_deg)
    p0 = np.zeros(3)
    p1 = np.array([1.0, 0.0, 0.0])
    p3 = la * np.array([np.cos(a), np.sin(a), 0.0])
    p2 = p1 + lb * np.array([-np.cos(b), np.sin(b), 0.0])
    return np.array([p0, p1, p2, p3])


class TestScaledJacobian:
    def test_unit_cube(self):
        assert abs(scaled_jacobian_hex(UNIT_CUBE) - 1.0) <= 1e-12

    def test_sheared_45(self):
        assert_allclose(scaled_jacobian_hex(sheared_cube(45.0)), np.sin(np.radians(45.0)), atol=1e-9)

    def test_collapsed_corner_is_degenerate(self):
        p = UNIT_CUBE.copy()
        p[6] = p[7]
        sj, deg = hex_scaled_jacobians(p, np.arange(8)[None])
        assert sj[0] == 0.0 and deg[0]

    def test_inverted_hex_is_negative(self):
        p = UNIT_CUBE.copy()
        p[6] = [0.2, 0.2, -0.5]
        assert scaled_jacobian_hex(p) < 0

    @given(st.floats(20.0, 160.0))
    def test_shear_family_matches_sine(self, angle):
        assert_allclose(scaled_jacobian_hex(sheared_cube(angle)), np.sin(np.radians(angle)), atol=1e-12)

    @given(st.integers(0, 2**32 - 1), st.floats(0.01, 100.0))
    def test_invariant_under_similarity(self, seed, scale):
        rng = np.random.default_rng(seed)
        p = UNIT_CUBE + rng.uniform(-0.15, 0.15, size=(8, 3))
        q = scale * p @ rotation_matrix(rng).T + rng.normal(size=3) * 10
        assert abs(scaled_jacobian_hex(p) - scaled_jacobian_hex(q)) <= 1e-12

    @given(st.integers(0, 2**32 - 1))
    def test_matches_brute_force(self, seed):
        p = UNIT_CUBE + np.random.default_rng(seed).uniform(-0.2, 0.2, size=(8, 3))
        assert_allclose(scaled_jacobian_hex(p), brute_scaled_jacobian(p), atol=1e-12)


class TestAngles:
    def test_unit_square(self):
        assert_allclose(quad_angles(UNIT_CUBE[:4]), (90.0, 90.0), atol=1e-12)

    def test_rhombus_60_120(self):
        p = quad_from_angles(60.0, 120.0, la=1.0, lb=1.0)
        assert_allclose(quad_angles(p), (60.0, 120.0), atol=1e-9)

    def test_equilateral_triangle(self):
        p = np.array([[0, 0, 0], [1, 0, 0], [0.5, np.sqrt(3) / 2, 0]])
        assert_allclose(tri_angles(p), (60.0, 60.0), atol=1e-12)

    def test_right_isosceles(self):
        assert_allclose(tri_angles(RIGHT_TET[:3]), (45.0, 90.0), atol=1e-12)

    def test_sliver_fails_both_bounds(self):
        # base 1 with base angles of 1 degree: apex angle 178 by the angle sum
        h = 0.5 * np.tan(np.radians(1.0))
        lo, hi = tri_angles(np.array([[0, 0, 0], [1, 0, 0], [0.5, h, 0]]))
        assert_allclose((lo, hi), (1.0, 178.0), atol=1e-9)
        rng = QualityThresholds().tri_angle_range
        assert lo < rng[0] and hi > rng[1]

    def test_low_angle_fails_despite_high_jacobian(self):
        # right prism over a 39.25 degree rhombus: scaled Jacobian sin(39.25) = 0.633
        base = quad_from_angles(39.25, 140.75, la=1.0, lb=1.0)
        p = np.vstack([base, base + [0, 0, 1.0]])
        rep = assess_hexes("h", p, np.arange(8)[None], QualityThresholds())
        assert rep.jacobian_failures().sum() == 0
        assert rep.angle_failures().sum() == 1
        assert_allclose(rep.min_angle[0], 39.25, atol=1e-9)
        assert_allclose(scaled_jacobian_hex(p), np.sin(np.radians(39.25)), atol=1e-12)

    @given(st.integers(0, 2**32 - 1), st.floats(0.01, 100.0))
    def test_invariant_under_similarity(self, seed, scale):
        rng = np.random.default_rng(seed)
        p = UNIT_CUBE[:4] + rng.uniform(-0.2, 0.2, size=(4, 3))
        q = scale * p @ rotation_matrix(rng).T + rng.normal(size=3)
        assert_allclose(quad_angles(p), quad_angles(q), atol=1e-9)


class TestVolumetricSkew:
    def test_regular(self):
        assert abs(vol_skew_tet(REGULAR_TET)) <= 1e-9

    def test_flat_is_exactly_one(self):
        p = RIGHT_TET.copy()
        p[3] = [0.3, 0.3, 0.0]
        assert vol_skew_tet(p) == 1.0

    def test_right_corner(self):
        assert_allclose(vol_skew_tet(RIGHT_TET), 0.5, atol=1e-9)

    def test_regular_volume_constant(self):
        # regular tet inscribed in a sphere of radius R: a = 4R / sqrt(6), V = a^3 / (6 sqrt 2)
        R = np.sqrt(3.0)
        a = 4 * R / np.sqrt(6)
        assert_allclose(a**3 / (6 * np.sqrt(2)), 8 * R**3 / (9 * np.sqrt(3)), rtol=1e-14)
        assert_allclose(abs(np.linalg.det(REGULAR_TET[1:] - REGULAR_TET[0])) / 6, a**3 / (6 * np.sqrt(2)))

    @given(st.integers(0, 2**32 - 1), st.floats(0.01, 100.0))
    def test_invariant_under_similarity(self, seed, scale):
        rng = np.random.default_rng(seed)
        p = REGULAR_TET + rng.uniform(-0.4, 0.4, size=(4, 3))
        q = scale * p @ rotation_matrix(rng).T + rng.normal(size=3)
        assert_allclose(vol_skew_tet(p), vol_skew_tet(q), atol=1e-9)

    def test_monotone_flattening(self):
        heights = np.linspace(1.0, 1e-4, 40)
        skews = []
        for h in heights:
            p = REGULAR_TET.copy()
            base = p[:3].mean(axis=0)
            normal = p[3] - base
            p[3] = base + h * normal
            skews.append(vol_skew_tet(p))
        assert np.all(np.diff(skews) > 0)
        assert skews[0] < 1e-9 and skews[-1] > 0.99

    @given(st.integers(0, 2**32 - 1))
    def test_zero_only_for_regular(self, seed):
        p = REGULAR_TET + np.random.default_rng(seed).uniform(-0.3, 0.3, size=(4, 3))
        if np.ptp(np.linalg.norm(p[:, None] - p[None], axis=2)[np.triu_indices(4, 1)]) > 1e-3:
            assert vol_skew_tet(p) > 1e-9


class TestThresholds:
    def test_defaults(self):
        t = QualityThresholds()
        assert (t.jacobian_min, t.quad_angle_range, t.tri_angle_range, t.skew_max) == (
            0.6, (45.0, 135.0), (30.0, 120.0), 0.95)

    @pytest.mark.parametrize("kw", [
        {"jacobian_min": 0.0}, {"jacobian_min": 1.5}, {"quad_angle_range": (90, 90)},
        {"tri_angle_range": (10, 200)}, {"skew_max": 0.0},
    ])
    def test_invalid(self, kw):
        with pytest.raises(InvalidSpecError):
            QualityThresholds(**kw).validate()


class TestReport:
    def test_straight_tube_passes_everything(self):
        wall, _, _ = tube_wall(n_theta=16)
        s = quality_report(wall).summary()["wall"]
        assert s["failed_jacobian"] == s["failed_angle"] == 0
        assert s["n_elements"] == len(wall.hexes) and s["n_nodes"] == wall.n_nodes

    def test_planted_flat_tet(self):
        tets = np.array([[0, 1, 2, 3], [0, 1, 2, 4]])
        nodes = np.vstack([RIGHT_TET, [[0.2, 0.2, 0.0]]])
        rep = QualityReport([assess_tets("ilt", nodes, tets, QualityThresholds())])
        s = rep.summary()["ilt"]
        assert s["failed_skew"] == 1 and s["max_skew"] == 1.0 and s["worst_skew_element"] == 1

    @given(st.integers(0, 2**32 - 1))
    def test_counts_match_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        n = 30
        p = np.vstack([UNIT_CUBE + rng.uniform(-0.35, 0.35, size=(8, 3)) + 3 * i for i in range(n)])
        hexes = np.arange(8 * n).reshape(n, 8)
        th = QualityThresholds()
        part = assess_hexes("w", p, hexes, th)
        sj = np.array([brute_scaled_jacobian(p[h]) for h in hexes])
        assert part.jacobian_failures().sum() == (sj < th.jacobian_min).sum()
        faces = [(0, 3, 2, 1), (4, 5, 6, 7), (0, 1, 5, 4), (1, 2, 6, 5), (2, 3, 7, 6), (3, 0, 4, 7)]
        bad = 0
        for h in hexes:
            ang = [quad_angles(p[h][list(f)]) for f in faces]
            lo, hi = min(a[0] for a in ang), max(a[1] for a in ang)
            bad += lo < 45.0 or hi > 135.0
        assert part.angle_failures().sum() == bad

    def test_table_and_json(self, small_tube):
        rep = quality_report(small_tube)
        table = rep.table()
        for label in ("No. of elements failed to Jacobian", "Min. Jacobian", "Max. vol. skew",
                      "No. of elements failed to min/max angle"):
            assert label in table
        assert "N/A" in table
        d = json.loads(rep.to_json(include_arrays=True))
        assert d["parts"]["wall"]["failed_jacobian"] == 0
        assert len(d["elements"]["wall"]["scaled_jacobian"]) == len(small_tube.hexes)
