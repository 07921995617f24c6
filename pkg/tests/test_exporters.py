import json

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from hexwall.errors import InvalidSpecError
from hexwall.exporters import (
    VolumeMesh,
    CellBlock,
    inp_string,
    read_inp,
    read_mesh,
    read_vtk,
    tet_volume_mesh,
    vtk_string,
    wall_volume_mesh,
    write_inp,
    write_json,
    write_vtk,
)
from hexwall.geometry import straight_tube_profiles
from hexwall.tetfill import build_ilt
from hexwall.topology import VTK_HEXAHEDRON, VTK_QUADRATIC_HEXAHEDRON, VTK_QUADRATIC_TETRA, VTK_TETRA

from conftest import tube_wall


@pytest.fixture(scope="module")
def wall_and_ilt():
    wall, _, _ = tube_wall(radius=10.0, n_theta=16)
    _, lumen = straight_tube_profiles(6.0, 20.0, 11, 16)
    return wall, build_ilt(wall, lumen, 2)


def blocks_equal(a, b):
    assert [x.cell_type for x in a.blocks] == [x.cell_type for x in b.blocks]
    for x, y in zip(a.blocks, b.blocks):
        assert_array_equal(x.cells, y.cells)


@pytest.mark.parametrize("quadratic", [False, True])
@pytest.mark.parametrize("with_ilt", [False, True])
def test_vtk_round_trip_is_exact(tmp_path, wall_and_ilt, quadratic, with_ilt):
    wall, ilt = wall_and_ilt
    mesh = wall_volume_mesh(wall, ilt if with_ilt else None, quadratic=quadratic)
    mesh.point_data["max_principal_stress_MPa"] = np.random.default_rng(0).random(len(mesh.nodes)) / 3
    write_vtk(tmp_path / "m.vtk", mesh)
    back = read_vtk(tmp_path / "m.vtk")
    assert_array_equal(back.nodes, mesh.nodes)
    blocks_equal(back, mesh)
    assert_array_equal(back.point_data["max_principal_stress_MPa"], mesh.point_data["max_principal_stress_MPa"])
    expected = {VTK_QUADRATIC_HEXAHEDRON if quadratic else VTK_HEXAHEDRON}
    if with_ilt:
        expected.add(VTK_QUADRATIC_TETRA if quadratic else VTK_TETRA)
    assert {b.cell_type for b in back.blocks} == expected


def test_vtk_vectors_and_tensors(tmp_path):
    rng = np.random.default_rng(1)
    mesh = VolumeMesh(rng.random((4, 3)), [CellBlock(VTK_TETRA, np.array([[0, 1, 2, 3]]))])
    mesh.point_data["u"] = rng.random((4, 3))
    mesh.point_data["sigma"] = rng.random((4, 3, 3))
    write_vtk(tmp_path / "t.vtk", mesh)
    back = read_vtk(tmp_path / "t.vtk")
    assert_array_equal(back.point_data["u"], mesh.point_data["u"])
    assert_array_equal(back.point_data["sigma"], mesh.point_data["sigma"])


def test_identical_meshes_give_identical_bytes(small_tube):
    a = vtk_string(wall_volume_mesh(small_tube))
    b = vtk_string(wall_volume_mesh(small_tube))
    assert a == b
    assert inp_string(wall_volume_mesh(small_tube)) == inp_string(wall_volume_mesh(small_tube))


@pytest.mark.parametrize("quadratic", [False, True])
def test_inp_round_trip(tmp_path, wall_and_ilt, quadratic):
    wall, ilt = wall_and_ilt
    mesh = wall_volume_mesh(wall, ilt, quadratic=quadratic)
    write_inp(tmp_path / "m.inp", mesh)
    back = read_inp(tmp_path / "m.inp")
    assert_array_equal(back.nodes, mesh.nodes)
    blocks_equal(back, mesh)
    assert [b.part for b in back.blocks] == ["WALL", "ILT"]
    assert set(back.node_sets) == set(mesh.node_sets)
    for name, ids in mesh.node_sets.items():
        assert_array_equal(back.node_sets[name], np.unique(ids))


def test_set_names(wall_and_ilt):
    wall, ilt = wall_and_ilt
    names = set(wall_volume_mesh(wall, ilt).node_sets)
    assert {"INNER_SURFACE", "OUTER_SURFACE", "TOP_RING", "BOTTOM_RING"} <= names
    assert {"LUMEN_SURFACE", "WALL_INTERFACE", "TOP_CAP", "BOTTOM_CAP"} <= names
    assert set(tet_volume_mesh(ilt).node_sets) == {"LUMEN_SURFACE", "WALL_INTERFACE", "TOP_CAP", "BOTTOM_CAP"}


def test_combined_ids_are_stable(wall_and_ilt):
    wall, ilt = wall_and_ilt
    mesh = wall_volume_mesh(wall, ilt)
    assert_array_equal(mesh.nodes[:wall.n_nodes], wall.nodes)
    assert_array_equal(mesh.blocks[0].cells, wall.hexes)
    # the interface set of the ILT lands exactly on the wall's inner surface
    assert_array_equal(np.sort(mesh.node_sets["WALL_INTERFACE"]), np.sort(mesh.node_sets["INNER_SURFACE"]))


def test_quadratic_sets_gain_mid_edge_nodes(small_tube):
    lin = wall_volume_mesh(small_tube)
    quad = wall_volume_mesh(small_tube, quadratic=True)
    ns, nt, _ = small_tube.shape
    # a ring of nt corners gains nt circumferential mid-edge nodes
    assert len(quad.node_sets["TOP_RING"]) > len(lin.node_sets["TOP_RING"])
    inner = quad.node_sets["INNER_SURFACE"]
    # inner surface: corners, plus circumferential and axial mid-edges
    assert len(inner) == ns * nt + ns * nt + (ns - 1) * nt
    r = np.linalg.norm(quad.nodes[inner, :2], axis=1)
    # chord midpoints sit slightly inside the corner radius
    assert r.min() > 0.98 * r.max()


def test_face_sets_point_at_surfaces(tmp_path, small_tube):
    mesh = wall_volume_mesh(small_tube)
    text = inp_string(mesh)
    assert "*SURFACE, NAME=INNER_SURFACE_S, TYPE=ELEMENT\nINNER_SURFACE_FACES, S5" in text
    assert "*SURFACE, NAME=OUTER_SURFACE_S, TYPE=ELEMENT\nOUTER_SURFACE_FACES, S3" in text
    _, inner, _ = mesh.face_sets["INNER_SURFACE_FACES"]
    _, outer, _ = mesh.face_sets["OUTER_SURFACE_FACES"]
    ns, nt, nl = small_tube.shape
    assert len(inner) == len(outer) == (ns - 1) * nt
    # face S5 is local (2, 3, 7, 6) and lies on the inner surface
    inner_nodes = set(small_tube.node_sets["inner_surface"].tolist())
    assert set(small_tube.hexes[inner][:, [2, 3, 7, 6]].ravel()) <= inner_nodes
    outer_nodes = set(small_tube.node_sets["outer_surface"].tolist())
    assert set(small_tube.hexes[outer][:, [0, 1, 5, 4]].ravel()) <= outer_nodes


def test_long_element_lines_wrap(small_tube):
    text = inp_string(wall_volume_mesh(small_tube, quadratic=True))
    body = text.split("TYPE=C3D20RH")[1].split("*")[0].strip().splitlines()
    assert max(len([v for v in line.split(",") if v.strip()]) for line in body) <= 16


@pytest.mark.parametrize("name", ["missing.vtk", "missing.inp"])
def test_missing_file(tmp_path, name):
    with pytest.raises(InvalidSpecError, match="not found"):
        read_mesh(tmp_path / name)


def test_unknown_extension(tmp_path):
    p = tmp_path / "m.msh"
    p.write_text("x")
    with pytest.raises(InvalidSpecError, match="unsupported"):
        read_mesh(p)


def test_not_vtk(tmp_path):
    p = tmp_path / "m.vtk"
    p.write_text("hello\nworld\nBINARY\nDATASET UNSTRUCTURED_GRID\n")
    with pytest.raises(InvalidSpecError):
        read_vtk(p)


def test_unsupported_inp_element(tmp_path):
    p = tmp_path / "m.inp"
    p.write_text("*NODE\n1, 0, 0, 0\n*ELEMENT, TYPE=S4R\n1, 1, 1, 1, 1\n")
    with pytest.raises(InvalidSpecError, match="S4R"):
        read_inp(p)


def test_json_numpy_values(tmp_path):
    write_json(tmp_path / "a.json", {"a": np.arange(3), "b": np.float64(0.5), "c": np.int32(2)})
    assert json.loads((tmp_path / "a.json").read_text()) == {"a": [0, 1, 2], "b": 0.5, "c": 2}
    with pytest.raises(ValueError):
        write_json(tmp_path / "b.json", {"x": float("nan")})
