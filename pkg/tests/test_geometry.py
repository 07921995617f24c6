import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from hexwall.errors import (
    EmptySurfaceError,
    InvalidSpecError,
    MultiBranchError,
    NonStarShapedError,
    STLParseError,
)
from hexwall.geometry import (
    SyntheticAAASpec,
    TriSurface,
    centerline_from_points,
    extract_centerline,
    load_stl,
    merge_vertices,
    parallel_transport_frames,
    polygon_area_centroid,
    profiles_from_radii,
    slice_profiles,
    smooth_profiles,
    straight_tube_profiles,
    synth_aaa,
    tube_surface,
)
from hexwall.stl import read_stl_facets, write_stl

CUBE_FACETS = [
    ((0, 0, 0), (0, 1, 0), (1, 1, 0)), ((0, 0, 0), (1, 1, 0), (1, 0, 0)),
    ((0, 0, 1), (1, 0, 1), (1, 1, 1)), ((0, 0, 1), (1, 1, 1), (0, 1, 1)),
    ((0, 0, 0), (1, 0, 0), (1, 0, 1)), ((0, 0, 0), (1, 0, 1), (0, 0, 1)),
    ((0, 1, 0), (0, 1, 1), (1, 1, 1)), ((0, 1, 0), (1, 1, 1), (1, 1, 0)),
    ((0, 0, 0), (0, 0, 1), (0, 1, 1)), ((0, 0, 0), (0, 1, 1), (0, 1, 0)),
    ((1, 0, 0), (1, 1, 0), (1, 1, 1)), ((1, 0, 0), (1, 1, 1), (1, 0, 1)),
]


def ascii_stl(facets, name="cube"):
    lines = [f"solid {name}"]
    for tri in facets:
        lines += ["  facet normal 0 0 0", "    outer loop"]
        lines += [f"      vertex {x:.6e} {y:.6e} {z:.6e}" for x, y, z in tri]
        lines += ["    endloop", "  endfacet"]
    lines.append(f"endsolid {name}")
    return "\n".join(lines) + "\n"


def cylinder_surface(radius, axis, length, n_theta=128, n_z=60, radii_fn=None):
    """Open tube of the given radius around a unit ``axis`` through the origin."""
    axis = np.asarray(axis, float) / np.linalg.norm(axis)
    s = np.linspace(-length / 2, length / 2, n_z + 1)
    tangents = np.tile(axis, (len(s), 1))
    n, b = parallel_transport_frames(tangents)
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    r = np.full((len(s), n_theta), float(radius)) if radii_fn is None else np.tile(radii_fn(theta), (len(s), 1))
    return tube_surface(np.outer(s, axis), n, b, r, theta)


class TestSTL:
    def test_ascii_cube_merges_to_8_vertices(self, tmp_path):
        p = tmp_path / "cube.stl"
        p.write_text(ascii_stl(CUBE_FACETS))
        surf = load_stl(str(p))
        assert len(surf.vertices) == 8 and len(surf.triangles) == 12
        assert surf.is_watertight()
        assert_allclose(surf.areas().sum(), 6.0, rtol=1e-12)

    def test_zero_facet_binary_is_empty(self, tmp_path):
        p = tmp_path / "empty.stl"
        p.write_bytes(b"\0" * 80 + struct.pack("<I", 0))
        with pytest.raises(EmptySurfaceError):
            load_stl(str(p))

    def test_bad_number_reports_offset(self, tmp_path):
        text = ascii_stl(CUBE_FACETS[:2]).replace("vertex 1.000000e+00 1.000000e+00 0.000000e+00",
                                                  "vertex 1.000000e+00 oops 0.000000e+00", 1)
        p = tmp_path / "bad.stl"
        p.write_text(text)
        with pytest.raises(STLParseError) as exc:
            load_stl(str(p))
        assert exc.value.offset == text.index("oops")

    def test_truncated_binary_reports_first_incomplete_facet(self, tmp_path):
        p = tmp_path / "t.stl"
        write_stl(str(p), np.array(CUBE_FACETS[0], float), np.array([[0, 1, 2]]))
        data = p.read_bytes()
        p.write_bytes(data[:80] + struct.pack("<I", 3) + data[84:])
        with pytest.raises(STLParseError) as exc:
            read_stl_facets(str(p))
        assert exc.value.offset == 84 + 50

    def test_degenerate_facets_dropped_with_warning(self, tmp_path):
        facets = CUBE_FACETS + [((0, 0, 0), (1, 0, 0), (2, 0, 0))]
        p = tmp_path / "deg.stl"
        p.write_text(ascii_stl(facets))
        with pytest.warns(UserWarning, match="dropped 1 degenerate"):
            surf = load_stl(str(p))
        assert len(surf.triangles) == 12

    @pytest.mark.parametrize("binary", [True, False])
    def test_synthetic_round_trip(self, tmp_path, binary):
        wall, _ = synth_aaa(SyntheticAAASpec(n_theta_facets=32, n_z_facets=20))
        p = tmp_path / "w.stl"
        wall.write(str(p), binary=binary)
        back = load_stl(str(p))
        assert back.triangles.shape == wall.triangles.shape
        # welding renumbers vertices in order of first use, so compare as sets
        a, b = np.unique(wall.vertices, axis=0), np.unique(back.vertices, axis=0)
        assert_allclose(b, a, atol=1e-6)
        if binary:
            assert np.array_equal(a, b)
        assert_allclose(back.vertices[back.triangles], wall.vertices[wall.triangles], atol=1e-6)

    def test_merge_vertices_keeps_first_occurrence_order(self):
        pts = np.array([[1.0, 0, 0], [0, 0, 0], [1.0 + 1e-9, 0, 0], [0, 0, 0]])
        v, idx = merge_vertices(pts)
        assert_allclose(v, [[1, 0, 0], [0, 0, 0]])
        assert idx.tolist() == [0, 1, 0, 1]


class TestSynthetic:
    def test_max_diameter_55(self):
        spec = SyntheticAAASpec()
        assert spec.max_diameter() == 2 * (12.5 + 15.0) == 55.0
        wall, _ = synth_aaa(spec)
        z = wall.vertices[:, 2]
        r = np.hypot(wall.vertices[:, 0], wall.vertices[:, 1])
        assert_allclose(r[np.isclose(z, spec.bulge_center)], 27.5, rtol=1e-6)

    def test_straight_cylinder_radii(self):
        spec = SyntheticAAASpec(length=100.0, base_radius=10.0, bulge_amplitude=0.0, bulge_center=50.0)
        wall, _ = synth_aaa(spec)
        cl = extract_centerline(wall, n_slices=9)
        for p in slice_profiles(wall, cl, 24):
            assert_allclose(p.radii, 10.0, rtol=2.0 / spec.n_theta_facets)

    def test_asymmetric_centroid_offset(self):
        spec = SyntheticAAASpec(asymmetry_offset=5.0, n_z_facets=64)
        wall, lumen = synth_aaa(spec)
        cl = extract_centerline(wall, n_slices=33)
        # a regular polygon centred at the offset has its centroid exactly there
        assert_allclose(cl.points[:, 0], spec.lateral_offset(cl.points[:, 2]), atol=2e-2)
        mid = np.argmin(abs(cl.points[:, 2] - spec.bulge_center))
        assert_allclose(cl.points[mid, 0], 5.0, atol=1e-2)
        assert_allclose(lumen.vertices[:, 0] ** 2 + lumen.vertices[:, 1] ** 2, 81.0, rtol=1e-6)

    def test_tessellation_too_coarse(self):
        with pytest.raises(InvalidSpecError):
            synth_aaa(SyntheticAAASpec(n_theta_facets=6))

    def test_roughness_is_seeded(self):
        a, _ = synth_aaa(SyntheticAAASpec(roughness=1.0, seed=3))
        b, _ = synth_aaa(SyntheticAAASpec(roughness=1.0, seed=3))
        c, _ = synth_aaa(SyntheticAAASpec(roughness=1.0, seed=4))
        assert np.array_equal(a.vertices, b.vertices)
        assert not np.array_equal(a.vertices, c.vertices)

    def test_tubes_open_only_at_ends(self):
        spec = SyntheticAAASpec(n_theta_facets=16, n_z_facets=10)
        wall, lumen = synth_aaa(spec)
        for surf in (wall, lumen):
            z = surf.vertices[surf.boundary_edges()][..., 2]
            assert np.all((z == 0.0) | (z == spec.length))
            assert len(surf.boundary_edges()) == 2 * 16


class TestCenterline:
    def test_straight_cylinder_on_axis(self):
        cl = extract_centerline(cylinder_surface(10.0, (0, 0, 1), 50.0), n_slices=12)
        assert_allclose(cl.points[:, :2], 0.0, atol=1e-9)
        assert_allclose(cl.tangents, np.tile([0, 0, 1.0], (12, 1)), atol=1e-12)

    def test_tilted_cylinder(self):
        radius = 10.0
        axis = np.array([np.sin(np.radians(30)), 0.0, np.cos(np.radians(30))])
        surf = cylinder_surface(radius, axis, 120.0, n_theta=96, n_z=120)
        cl = extract_centerline(surf, n_slices=20, margin=radius)
        # distance of each centroid from the known axis line through the origin
        d = cl.points - np.outer(cl.points @ axis, axis)
        assert np.linalg.norm(d, axis=1).max() < 0.01 * radius

    def test_two_tubes_are_multi_branch(self):
        a = cylinder_surface(3.0, (0, 0, 1), 20.0, n_theta=16, n_z=4)
        b = cylinder_surface(3.0, (0, 0, 1), 20.0, n_theta=16, n_z=4)
        b.vertices[:, 0] += 10.0
        both = TriSurface(np.vstack([a.vertices, b.vertices]),
                          np.vstack([a.triangles, b.triangles + len(a.vertices)]))
        with pytest.raises(MultiBranchError):
            extract_centerline(both, n_slices=4)

    def test_n_slices_precondition(self):
        with pytest.raises(InvalidSpecError):
            extract_centerline(cylinder_surface(5.0, (0, 0, 1), 10.0), n_slices=1)

    @given(amp=st.floats(0.0, 15.0), width=st.floats(6.0, 20.0), base=st.floats(8.0, 14.0))
    def test_symmetric_synthetic_centerline_on_axis(self, amp, width, base):
        spec = SyntheticAAASpec(base_radius=base, bulge_amplitude=amp, bulge_width=width,
                                lumen_radius=0.5 * base, n_theta_facets=48, n_z_facets=48)
        wall, _ = synth_aaa(spec)
        cl = extract_centerline(wall, n_slices=10)
        assert np.abs(cl.points[:, :2]).max() <= 1e-3 * base

    @given(st.integers(0, 2**32 - 1))
    def test_frames_have_no_spurious_twist(self, seed):
        rng = np.random.default_rng(seed)
        s = np.linspace(0, 1, 40)
        coef = rng.normal(size=(3, 3))
        pts = np.stack([s * 50, coef[0, 0] * np.sin(3 * s + coef[0, 1]) * 5,
                        coef[1, 0] * np.cos(2 * s + coef[1, 1]) * 5], axis=1)
        cl = centerline_from_points(pts)
        t, n, b = cl.tangents, cl.normals, cl.binormals
        assert_allclose(np.einsum("ij,ij->i", n, t), 0.0, atol=1e-12)
        assert_allclose(np.linalg.norm(n, axis=1), 1.0, rtol=1e-12)
        assert_allclose(np.cross(n, b), t, atol=1e-12)
        ang_t = np.arccos(np.clip(np.einsum("ij,ij->i", t[1:], t[:-1]), -1, 1))
        ang_n = np.arccos(np.clip(np.einsum("ij,ij->i", n[1:], n[:-1]), -1, 1))
        assert np.all(ang_n <= ang_t + 1e-9)


class TestSliceProfiles:
    def test_bulge_apex(self):
        spec = SyntheticAAASpec()
        wall, _ = synth_aaa(spec)
        cl = extract_centerline(wall, n_slices=spec.n_z_facets // 2 + 1)
        mid = int(np.argmin(abs(cl.points[:, 2] - spec.bulge_center)))
        assert_allclose(cl.points[mid, 2], spec.bulge_center, atol=1e-6)
        prof = slice_profiles(wall, cl, 40)
        assert_allclose(prof[mid].radii, 27.5, rtol=2.0 / spec.n_theta_facets)

    def test_ellipse_section(self):
        a, b = 10.0, 15.0

        def polar(theta):
            return a * b / np.sqrt((b * np.cos(theta)) ** 2 + (a * np.sin(theta)) ** 2)

        surf = cylinder_surface(1.0, (0, 0, 1), 30.0, n_theta=256, n_z=6, radii_fn=polar)
        cl = extract_centerline(surf, n_slices=5)
        assert_allclose(cl.normals[0], [1, 0, 0], atol=1e-12)
        for p in slice_profiles(surf, cl, 36):
            assert_allclose(p.radii, polar(p.angles), rtol=2e-3)

    def test_hidden_lobe_is_rejected(self):
        # peanut section seen from inside one lobe: rays grazing the waist cross the wall 3 times
        surf = cylinder_surface(1.0, (0, 0, 1), 20.0, n_theta=128, n_z=4,
                                radii_fn=lambda t: 2 + 10 * np.cos(t) ** 4)
        cl = centerline_from_points(np.array([[9.0, 0, -5], [9.0, 0, 5]]), end_tangent=(0, 0, 1))
        with pytest.raises(NonStarShapedError, match="crosses the wall 3 times") as exc:
            slice_profiles(surf, cl, 720)
        assert exc.value.slice_index == 0
        assert 150 < np.degrees(exc.value.angle) < 180

    @given(amp=st.floats(0.0, 15.0), width=st.floats(8.0, 20.0), n_theta=st.integers(8, 48))
    def test_reconstruction_matches_analytic_radius(self, amp, width, n_theta):
        spec = SyntheticAAASpec(bulge_amplitude=amp, bulge_width=width, n_theta_facets=64, n_z_facets=64)
        wall, _ = synth_aaa(spec)
        cl = extract_centerline(wall, n_slices=12)
        for p in slice_profiles(wall, cl, n_theta):
            exact = spec.radius(p.center[2])
            assert np.abs(p.radii / exact - 1).max() <= 2.0 / spec.n_theta_facets

    def test_polygon_centroid(self):
        sq = np.array([[1.0, 1.0], [3.0, 1.0], [3.0, 2.0], [1.0, 2.0]])
        area, c = polygon_area_centroid(sq)
        assert_allclose(abs(area), 2.0)
        assert_allclose(c, [2.0, 1.5])


class TestSmoothing:
    def test_constant_is_fixed_point(self):
        _, prof = straight_tube_profiles(10.0, 20.0, 8, 16)
        out, change = smooth_profiles(prof, 5, 0.5, return_area_change=True)
        for p in out:
            assert_allclose(p.radii, 10.0, rtol=1e-15)
        assert_allclose(change, 0.0, atol=1e-10)

    def test_spike_decreases_monotonically(self):
        cl, prof = straight_tube_profiles(10.0, 20.0, 9, 16)
        prof[4].radii[3] += 2.0
        amps = [2.0]
        for _ in range(10):
            prof = smooth_profiles(prof, 1, 0.5)
            amps.append(prof[4].radii[3] - 10.0)
        assert np.all(np.diff(amps) < 0)
        assert amps[-1] > 0

    def test_lambda_zero_rejected(self):
        _, prof = straight_tube_profiles(10.0, 20.0, 4, 8)
        with pytest.raises(InvalidSpecError):
            smooth_profiles(prof, 1, 0.0)

    def test_boundary_slices_fixed(self):
        cl, _ = straight_tube_profiles(10.0, 20.0, 6, 12)
        r = 10 + np.random.default_rng(0).normal(size=(6, 12))
        out = smooth_profiles(profiles_from_radii(cl, r), 20, 0.7)
        assert np.array_equal(out[0].radii, r[0]) and np.array_equal(out[-1].radii, r[-1])

    @given(st.integers(0, 2**32 - 1), st.floats(0.05, 0.99))
    def test_contraction(self, seed, lam):
        ns, nt = 7, 12
        cl, _ = straight_tube_profiles(10.0, 20.0, ns, nt)
        r = 10 + np.random.default_rng(seed).normal(size=(ns, nt))
        # fixed point: discrete harmonic field with the end rings as Dirichlet data
        idx = np.arange(ns * nt).reshape(ns, nt)
        a = np.eye(ns * nt)
        rhs = r.ravel().copy()
        for j in range(1, ns - 1):
            for i in range(nt):
                row = idx[j, i]
                rhs[row] = 0.0
                for jj, ii in ((j - 1, i), (j + 1, i), (j, (i - 1) % nt), (j, (i + 1) % nt)):
                    a[row, idx[jj, ii]] -= 0.25
        h = np.linalg.solve(a, rhs).reshape(ns, nt)
        prof = profiles_from_radii(cl, r)
        prev = r
        for _ in range(5):
            prof = smooth_profiles(prof, 1, lam)
            cur = np.stack([p.radii for p in prof])
            # discrete maximum principle: no value leaves the previous range
            assert cur.min() >= prev.min() - 1e-12 and cur.max() <= prev.max() + 1e-12
            assert np.linalg.norm(cur - h) <= np.linalg.norm(prev - h) + 1e-12
            prev = cur
