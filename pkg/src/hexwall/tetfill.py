"""Tetrahedral fill of the thrombus annulus between lumen and inner wall.

The annulus is discretised as a structured lattice along the wall's own
radial rays, so its outermost shell coincides node-for-node with the wall's
inner surface.  Each lattice cell is split into 6 tetrahedra by coning from
its lowest-id corner to the triangulated far faces, where every quadrilateral
face is cut along the diagonal through its lowest-id corner.  Because the
diagonal of a face depends only on its own node ids, neighbouring cells
always agree and the mesh is face-conforming.

ILT lattice indexing: slice ``j``, angle ``i``, radial station ``m`` (0 on
the lumen, ``n_radial`` on the wall interface) map to node
``(j * n_theta + i) * (n_radial + 1) + m``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, InvalidSpecError, MeshError, TopologyError
from .topology import HEX_FACES, TET_FACES, tet_volumes

LUMEN_SURFACE, WALL_INTERFACE = "lumen_surface", "wall_interface"
TOP_CAP, BOTTOM_CAP = "top_cap", "bottom_cap"


@dataclass
class IltLattice:
    points: np.ndarray  # (n_slices, n_theta, n_radial + 1, 3)
    wall_node_ids: np.ndarray  # (n_slices, n_theta) wall ids of the m = n_radial shell

    @property
    def shape(self):
        ns, nt, nr1, _ = self.points.shape
        return ns, nt, nr1 - 1


@dataclass
class TetFillMesh:
    nodes: np.ndarray
    tets: np.ndarray
    node_sets: dict
    # wall node id for each ILT node on the interface, -1 elsewhere
    wall_node_map: np.ndarray
    shape: tuple  # (n_slices, n_theta, n_radial)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elements(self):
        return len(self.tets)

    def lattice_ids(self):
        ns, nt, nr = self.shape
        return np.arange(ns * nt * (nr + 1)).reshape(ns, nt, nr + 1)


def auto_n_radial(mean_thickness, target_element_size):
    return max(1, int(np.ceil(mean_thickness / target_element_size)))


def build_ilt_lattice(wall_inner_rings, lumen_profiles, n_radial):
    """Interpolate nodes along each wall ray from the lumen to the inner wall.

    ``wall_inner_rings`` is ``(ids, points)`` as returned by
    :meth:`HexWallMesh.inner_rings`.  ``lumen_profiles`` must be ray-cast on
    the wall's centerline frames so both surfaces share rays.
    """
    ids, wall_pts = wall_inner_rings
    ns, nt = ids.shape
    if n_radial < 1:
        raise InvalidSpecError("n_radial must be >= 1")
    if len(lumen_profiles) != ns or lumen_profiles[0].n_theta != nt:
        raise InvalidSpecError(
            f"lumen profiles ({len(lumen_profiles)} x {lumen_profiles[0].n_theta}) do not match "
            f"the wall rings ({ns} x {nt})"
        )
    lumen_pts = np.stack([p.points() for p in lumen_profiles])
    centers = np.stack([p.center for p in lumen_profiles])
    r_lumen = np.stack([p.radii for p in lumen_profiles])
    r_wall = np.linalg.norm(wall_pts - centers[:, None, :], axis=2)
    bad = np.argwhere(r_lumen >= r_wall)
    if len(bad):
        j, i = map(int, bad[0])
        raise GeometryError(
            f"lumen radius {r_lumen[j, i]:.4f} mm reaches the inner wall ({r_wall[j, i]:.4f} mm) "
            f"at slice {j}, angle {np.degrees(lumen_profiles[j].angles[i]):.2f} deg "
            f"({len(bad)} locations)"
        )
    f = np.arange(n_radial + 1) / n_radial
    pts = lumen_pts[:, :, None, :] + f[None, None, :, None] * (wall_pts - lumen_pts)[:, :, None, :]
    pts[:, :, -1] = wall_pts  # bit-identical interface
    return IltLattice(pts, ids.copy())


def _cell_corners(lat_ids):
    """Hex-ordered corners of every lattice cell (local axes: angle, inward, axial)."""
    ns, nt, nr1 = lat_ids.shape
    j, i, m = np.meshgrid(np.arange(ns - 1), np.arange(nt), np.arange(nr1 - 1), indexing="ij")
    i1 = (i + 1) % nt
    L = lat_ids
    return np.stack(
        [L[j, i, m + 1], L[j, i1, m + 1], L[j, i1, m], L[j, i, m],
         L[j + 1, i, m + 1], L[j + 1, i1, m + 1], L[j + 1, i1, m], L[j + 1, i, m]],
        axis=-1,
    ).reshape(-1, 8)


def split_cells(cells):
    """Split hex-ordered cells into 6 tetrahedra each (see module docstring).

    Returns an (6 * n_cells, 4) array; tets of cell ``c`` are rows
    ``6c .. 6c + 5``.
    """
    n = len(cells)
    v0_local = np.argmin(cells, axis=1)
    faces = cells[:, HEX_FACES]  # (n, 6, 4), outward wound
    contains_v0 = (HEX_FACES[None, :, :] == v0_local[:, None, None]).any(axis=2)
    far = faces[~contains_v0].reshape(n, 3, 4)
    # diagonal through the face's lowest-id corner
    rot = np.argmin(far, axis=2) % 2  # 0: diagonal a-c, 1: diagonal b-d
    a, b, c, d = (far[..., k] for k in range(4))
    t1 = np.where(rot[..., None] == 0, np.stack([a, b, c], -1), np.stack([b, c, d], -1))
    t2 = np.where(rot[..., None] == 0, np.stack([a, c, d], -1), np.stack([b, d, a], -1))
    tris = np.stack([t1, t2], axis=2).reshape(n, 6, 3)
    apex = cells[np.arange(n), v0_local]
    # outward triangle (p, q, r) seen from an interior apex: (p, r, q, apex) is positive
    tets = np.stack(
        [tris[..., 0], tris[..., 2], tris[..., 1], np.broadcast_to(apex[:, None], (n, 6))], axis=-1
    )
    return tets.reshape(-1, 4)


def split_to_tets(lattice: IltLattice):
    ns, nt, nr = lattice.shape
    nodes = lattice.points.reshape(-1, 3)
    lat_ids = np.arange(len(nodes)).reshape(ns, nt, nr + 1)
    cells = _cell_corners(lat_ids)
    tets = split_cells(cells)
    vol = tet_volumes(nodes, tets)
    bad = np.nonzero(vol <= 0)[0]
    if len(bad):
        cell_ids = np.unique(bad // 6)
        raise MeshError(
            f"{len(bad)} non-positive tetrahedra in {len(cell_ids)} cells (first cell "
            f"{int(cell_ids[0])}); the annulus is too distorted, refine it"
        )
    wall_map = np.full(len(nodes), -1, dtype=np.int64)
    wall_map[lat_ids[:, :, nr].ravel()] = lattice.wall_node_ids.ravel()
    sets = {
        LUMEN_SURFACE: lat_ids[:, :, 0].ravel(),
        WALL_INTERFACE: lat_ids[:, :, nr].ravel(),
    }
    return TetFillMesh(nodes, tets, sets, wall_map, (ns, nt, nr))


def boundary_triangles(tets):
    """Tet faces used once, wound outward."""
    f = tets[:, TET_FACES].reshape(-1, 3)
    key = np.sort(f, axis=1)
    _, first, counts = np.unique(key, axis=0, return_index=True, return_counts=True)
    return f[first[counts == 1]]


@dataclass
class CapReport:
    n_lumen: int
    n_interface: int
    n_top: int
    n_bottom: int
    euler_characteristic: int
    n_components: int


def _components(n_nodes, tris):
    parent = np.arange(n_nodes)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b, c in tris:
        ra, rb, rc = find(a), find(b), find(c)
        parent[rb] = ra
        parent[find(rc)] = ra
    used = np.unique(tris)
    return len({find(v) for v in used})


def cap_ends(mesh: TetFillMesh, return_report=False):
    """Tag end-cap node sets and verify that the boundary is closed.

    Every boundary triangle must lie on the lumen, the wall interface or one
    of the two caps, and every boundary edge must be shared by exactly two
    boundary triangles.
    """
    ids = mesh.lattice_ids()
    sets = dict(mesh.node_sets)
    sets[BOTTOM_CAP] = ids[0].ravel()
    sets[TOP_CAP] = ids[-1].ravel()
    bt = boundary_triangles(mesh.tets)
    edges = np.sort(bt[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    uedges, ecount = np.unique(edges, axis=0, return_counts=True)
    dangling = uedges[ecount != 2]
    if len(dangling):
        raise TopologyError(
            f"boundary is not closed: {len(dangling)} edges not shared by two boundary triangles",
            dangling_edges=[tuple(map(int, e)) for e in dangling[:50]],
        )
    member = {}
    for name in (LUMEN_SURFACE, WALL_INTERFACE, TOP_CAP, BOTTOM_CAP):
        mask = np.zeros(mesh.n_nodes, dtype=bool)
        mask[sets[name]] = True
        member[name] = mask[bt].all(axis=1)
    classified = np.zeros(len(bt), dtype=bool)
    for m in member.values():
        classified |= m
    if not classified.all():
        stray = bt[~classified]
        raise TopologyError(
            f"{len(stray)} boundary triangles are on neither lumen, interface nor caps",
            dangling_edges=[tuple(map(int, t)) for t in stray[:50]],
        )
    capped = TetFillMesh(mesh.nodes, mesh.tets, sets, mesh.wall_node_map, mesh.shape)
    if not return_report:
        return capped
    nv = len(np.unique(bt))
    report = CapReport(
        int(member[LUMEN_SURFACE].sum()), int(member[WALL_INTERFACE].sum()),
        int(member[TOP_CAP].sum()), int(member[BOTTOM_CAP].sum()),
        nv - len(uedges) + len(bt), _components(mesh.n_nodes, bt),
    )
    return capped, report


@dataclass
class ConformityReport:
    max_distance: float
    tris_per_quad_min: int
    tris_per_quad_max: int
    n_pyramids: int
    n_unmatched_interface_nodes: int

    @property
    def conformal(self):
        return (
            self.max_distance <= 1e-9
            and self.tris_per_quad_min == 2
            and self.tris_per_quad_max == 2
            and self.n_pyramids == 0
            and self.n_unmatched_interface_nodes == 0
        )


def check_conformal(wall, ilt: TetFillMesh, tol=1e-9):
    """Compare the ILT interface with the wall's inner surface, geometrically.

    Interface nodes are matched to their nearest wall inner-surface node; a
    wall quad is covered when exactly two interface triangles use only its
    four nodes.
    """
    from scipy.spatial import cKDTree

    from .hexmesher import INNER_SURFACE

    inner_ids = np.asarray(wall.node_sets[INNER_SURFACE])
    tree = cKDTree(wall.nodes[inner_ids])
    iface = np.asarray(ilt.node_sets[WALL_INTERFACE])
    dist, nn = tree.query(ilt.nodes[iface])
    max_d = float(dist.max()) if len(dist) else 0.0
    quads = wall.face_sets["inner_faces"]
    qp = wall.nodes[quads]
    min_edge = np.linalg.norm(qp - np.roll(qp, 1, axis=1), axis=2).min()
    # topological matching tolerance; the distance itself is reported separately
    matched = dist <= 0.25 * min_edge
    to_wall = np.full(ilt.n_nodes, -1, dtype=np.int64)
    to_wall[iface[matched]] = inner_ids[nn[matched]]

    bt = boundary_triangles(ilt.tets)
    wt = to_wall[bt]
    wt = wt[(wt >= 0).all(axis=1)]
    # index quads by sorted node tuple; a triangle belongs to the quad containing all its nodes
    owner = {}
    for q, nodes in enumerate(quads):
        for skip in range(4):
            owner[tuple(sorted(np.delete(nodes, skip)))] = q
    counts = np.zeros(len(quads), dtype=np.int64)
    for tri in wt:
        q = owner.get(tuple(sorted(tri)))
        if q is not None:
            counts[q] += 1
    n_pyr = len(ilt.tets) if ilt.tets.shape[1] == 5 else 0
    return ConformityReport(
        max_d,
        int(counts.min()) if len(counts) else 0,
        int(counts.max()) if len(counts) else 0,
        n_pyr,
        int((~matched).sum()),
    )


def combine(wall, ilt: TetFillMesh):
    """Merge wall and ILT node tables.

    Wall nodes keep their ids; ILT nodes not on the interface are appended in
    ILT order.  Returns ``(nodes, ilt_to_global)``.
    """
    own = ilt.wall_node_map < 0
    ilt_to_global = ilt.wall_node_map.copy()
    ilt_to_global[own] = wall.n_nodes + np.arange(int(own.sum()))
    nodes = np.vstack([wall.nodes, ilt.nodes[own]])
    return nodes, ilt_to_global


def build_ilt(wall, lumen_profiles, n_radial):
    """Lattice, split and cap in one call."""
    lattice = build_ilt_lattice(wall.inner_rings(), lumen_profiles, n_radial)
    return cap_ends(split_to_tets(lattice))
