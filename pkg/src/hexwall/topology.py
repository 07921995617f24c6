"""Element corner-ordering conventions shared by every module.

Hexahedra use the VTK / Abaqus C3D8 ordering: corners 0-3 form the bottom
face counter-clockwise about the bottom-to-top direction, corners 4-7 sit
above 0-3.  With this ordering the isoparametric Jacobian is positive for a
valid element.  Quadratic (20-node) hexahedra append one mid-edge node per
entry of ``HEX_EDGES`` in that order (VTK type 25, Abaqus C3D20).

Tetrahedra are ordered so that ``det(p1-p0, p2-p0, p3-p0) > 0``; 10-node
tetrahedra append mid-edge nodes in ``TET_EDGES`` order (VTK type 24).

Face tuples are wound so their right-hand normal points out of the element.
"""

import numpy as np

HEX_EDGES = np.array(
    [(0, 1), (1, 2), (2, 3), (3, 0), (4, 5), (5, 6), (6, 7), (7, 4),
     (0, 4), (1, 5), (2, 6), (3, 7)]
)
HEX_FACES = np.array(
    [(0, 3, 2, 1), (4, 5, 6, 7), (0, 1, 5, 4), (1, 2, 6, 5), (2, 3, 7, 6), (3, 0, 4, 7)]
)
# three edge-neighbours of each corner, ordered to form a right-handed triad
HEX_CORNER_NEIGHBORS = np.array(
    [(1, 3, 4), (2, 0, 5), (3, 1, 6), (0, 2, 7), (7, 5, 0), (4, 6, 1), (5, 7, 2), (6, 4, 3)]
)
HEX_NATURAL = np.array(
    [(-1, -1, -1), (1, -1, -1), (1, 1, -1), (-1, 1, -1),
     (-1, -1, 1), (1, -1, 1), (1, 1, 1), (-1, 1, 1)], dtype=np.float64
)

TET_EDGES = np.array([(0, 1), (1, 2), (2, 0), (0, 3), (1, 3), (2, 3)])
TET_FACES = np.array([(0, 2, 1), (0, 1, 3), (1, 2, 3), (0, 3, 2)])

VTK_TETRA, VTK_HEXAHEDRON, VTK_QUADRATIC_TETRA, VTK_QUADRATIC_HEXAHEDRON = 10, 12, 24, 25


def hex_corner_triads(nodes, hexes):
    """Edge vectors leaving each corner, shape (m, 8, 3, 3) [corner, edge, xyz]."""
    p = nodes[hexes]
    return p[:, HEX_CORNER_NEIGHBORS] - p[:, :, None, :]


def hex_corner_dets(nodes, hexes):
    return np.linalg.det(hex_corner_triads(nodes, hexes))


def tet_volumes(nodes, tets):
    p = nodes[tets]
    return np.linalg.det(p[:, 1:] - p[:, :1]) / 6.0


def unique_edges(cells, edge_pairs):
    """Unique sorted edges of a cell array and per-cell edge index into them."""
    e = cells[:, edge_pairs]
    e = np.sort(e, axis=2).reshape(-1, 2)
    edges, inv = np.unique(e, axis=0, return_inverse=True)
    return edges, inv.reshape(len(cells), len(edge_pairs))


def promote_quadratic(nodes, cells, edge_pairs):
    """Insert one shared mid-edge node per unique edge.

    Returns ``(nodes, quadratic_cells, edges)``; mid-edge node ``n`` of edge
    ``e`` has index ``len(nodes) + e``.
    """
    edges, inv = unique_edges(cells, edge_pairs)
    mid = 0.5 * (nodes[edges[:, 0]] + nodes[edges[:, 1]])
    out = np.vstack([nodes, mid])
    qcells = np.hstack([cells, len(nodes) + inv])
    return out, qcells, edges
