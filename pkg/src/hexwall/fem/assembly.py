"""Model construction, block-sparse stiffness assembly and pressure loads.

Degrees of freedom are numbered ``3 * node + component``.  The stiffness is
stored as a 3x3 block CSR matrix whose sparsity pattern comes from the unique
node pairs of all elements; element blocks are reduced into it in element
order, so assembly is deterministic.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from ..errors import InvalidSpecError
from ..hexmesher import BOTTOM_RING, TOP_RING
from ..tetfill import BOTTOM_CAP, LUMEN_SURFACE, TOP_CAP, WALL_INTERFACE, boundary_triangles, combine
from .elements import hex8_stiffness, tet4_stiffness
from .materials import MaterialSpec

ILT_STIFFNESS_RATIO = 20.0
ILT_POISSON = 0.45
HEX_BATCH = 4096
TET_BATCH = 32768


@dataclass
class Part:
    name: str
    kind: str  # "hex8" or "tet4"
    cells: np.ndarray  # global node ids
    material: MaterialSpec


@dataclass
class FEModel:
    nodes: np.ndarray
    parts: list
    node_sets: dict
    load_faces: list  # arrays of quads and/or triangles wound out of the solid
    ilt_to_global: Optional[np.ndarray] = None

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_dof(self):
        return 3 * len(self.nodes)

    def part(self, name):
        for p in self.parts:
            if p.name == name:
                return p
        raise KeyError(name)


def default_materials(wall_modulus=3.0, wall_poisson=0.49):
    wall = MaterialSpec(wall_modulus, wall_poisson)
    return {"wall": wall, "ilt": MaterialSpec(wall_modulus / ILT_STIFFNESS_RATIO, ILT_POISSON)}


def build_model(wall, ilt=None, materials=None):
    """Assemble the node table, parts, node sets and loaded faces.

    Without ILT the pressure acts on the wall's inner surface.  With ILT it
    acts on the lumen surface, and the ILT end caps join the fixed end rings.
    """
    materials = dict(materials or default_materials())
    for m in materials.values():
        m.validate()
    if "wall" not in materials:
        raise InvalidSpecError("materials must define the 'wall' part")
    sets = {k: np.asarray(v) for k, v in wall.node_sets.items()}
    parts = [Part("wall", "hex8", np.asarray(wall.hexes), materials["wall"])]
    if ilt is None:
        return FEModel(wall.nodes, parts, sets, [wall.face_sets["inner_faces"]])
    if "ilt" not in materials:
        raise InvalidSpecError("materials must define the 'ilt' part when ILT is included")
    nodes, g = combine(wall, ilt)
    tets = g[ilt.tets]
    parts.append(Part("ilt", "tet4", tets, materials["ilt"]))
    for name in (LUMEN_SURFACE, WALL_INTERFACE, TOP_CAP, BOTTOM_CAP):
        sets[name] = g[np.asarray(ilt.node_sets[name])]
    sets[TOP_RING] = np.union1d(sets[TOP_RING], sets[TOP_CAP])
    sets[BOTTOM_RING] = np.union1d(sets[BOTTOM_RING], sets[BOTTOM_CAP])
    bt = boundary_triangles(tets)
    on_lumen = np.zeros(len(nodes), dtype=bool)
    on_lumen[sets[LUMEN_SURFACE]] = True
    lumen_tris = bt[on_lumen[bt].all(axis=1)]
    return FEModel(nodes, parts, sets, [lumen_tris], ilt_to_global=g)


def _pattern(n_nodes, parts):
    keys = []
    for p in parts:
        c = np.asarray(p.cells, dtype=np.int64)
        keys.append((c[:, :, None] * n_nodes + c[:, None, :]).ravel())
    keys = np.unique(np.concatenate(keys))
    rows = keys // n_nodes
    cols = keys % n_nodes
    indptr = np.searchsorted(rows, np.arange(n_nodes + 1))
    return keys, cols, indptr


def assemble(model: FEModel, bbar=True, scale=1.0):
    """Global stiffness matrix as ``scipy.sparse.bsr_matrix`` with 3x3 blocks."""
    n = model.n_nodes
    keys, cols, indptr = _pattern(n, model.parts)
    nb = len(keys)
    data = np.zeros((nb, 9))
    for p in model.parts:
        D = p.material.elasticity_matrix() * scale
        cells = np.asarray(p.cells, dtype=np.int64)
        k = cells.shape[1]
        batch = HEX_BATCH if p.kind == "hex8" else TET_BATCH
        for s in range(0, len(cells), batch):
            c = cells[s:s + batch]
            X = model.nodes[c]
            if p.kind == "hex8":
                ke = hex8_stiffness(X, D, bbar=bbar, first_element=s)
            else:
                ke = tet4_stiffness(X, D, first_element=s)
            blocks = ke.reshape(len(c), k, 3, k, 3).transpose(0, 1, 3, 2, 4).reshape(-1, 9)
            pos = np.searchsorted(keys, (c[:, :, None] * n + c[:, None, :]).ravel())
            # unbuffered, in element order
            np.add.at(data, pos, blocks)
    return sp.bsr_matrix((data.reshape(nb, 3, 3), cols, indptr), shape=(3 * n, 3 * n))


# --------------------------------------------------------------------------
# pressure


_QG = np.array([-1.0, 1.0]) / np.sqrt(3.0)


def _quad_gauss(X):
    """Yield shape values and the unnormalised normal x_a x x_b at 2x2 Gauss points."""
    for a in _QG:
        for b in _QG:
            N = 0.25 * np.array([(1 - a) * (1 - b), (1 + a) * (1 - b), (1 + a) * (1 + b), (1 - a) * (1 + b)])
            dNa = 0.25 * np.array([-(1 - b), (1 - b), (1 + b), -(1 + b)])
            dNb = 0.25 * np.array([-(1 - a), -(1 + a), (1 + a), (1 - a)])
            xa = np.einsum("a,mai->mi", dNa, X)
            xb = np.einsum("a,mai->mi", dNb, X)
            yield N, np.cross(xa, xb)


def _quad_forces(nodes, quads):
    """Consistent loads of unit pressure on bilinear quads, (m, 4, 3)."""
    X = nodes[quads]
    out = np.zeros(X.shape)
    for N, n in _quad_gauss(X):
        out -= N[None, :, None] * n[:, None, :]
    return out


def _tri_forces(nodes, tris):
    X = nodes[tris]
    n = 0.5 * np.cross(X[:, 1] - X[:, 0], X[:, 2] - X[:, 0])
    return np.repeat(-n[:, None, :] / 3.0, 3, axis=1)


def face_areas(nodes, faces):
    X = np.asarray(nodes, dtype=np.float64)[np.asarray(faces)]
    if X.shape[1] == 3:
        return 0.5 * np.linalg.norm(np.cross(X[:, 1] - X[:, 0], X[:, 2] - X[:, 0]), axis=1)
    return sum(np.linalg.norm(n, axis=1) for _, n in _quad_gauss(X))


def apply_pressure(nodes, faces, pressure, closed=False, rtol=1e-9):
    """Consistent nodal forces (n_nodes, 3) for pressure on faces.

    ``faces`` holds triangles or quads wound so their normal points out of the
    loaded solid; the traction is ``-pressure * n``, i.e. the pressure pushes
    into the solid.  Units follow the inputs (MPa on mm gives N).  With
    ``closed=True`` the net force must vanish, otherwise the winding is
    inconsistent and :class:`InvalidSpecError` is raised.
    """
    nodes = np.asarray(nodes, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64)
    if faces.ndim != 2 or faces.shape[1] not in (3, 4):
        raise InvalidSpecError("faces must be triangles or quadrilaterals")
    fe = _tri_forces(nodes, faces) if faces.shape[1] == 3 else _quad_forces(nodes, faces)
    fe *= pressure
    f = np.zeros((len(nodes), 3))
    idx = faces.ravel()
    for c in range(3):
        f[:, c] = np.bincount(idx, weights=fe[..., c].ravel(), minlength=len(nodes))
    if closed:
        net = np.linalg.norm(fe.sum(axis=(0, 1)))
        scale = abs(pressure) * face_areas(nodes, faces).sum()
        if net > rtol * scale:
            raise InvalidSpecError(
                f"net pressure force {net:.3e} on a closed surface (scale {scale:.3e}); "
                "face winding is inconsistent"
            )
    return f


def pressure_loads(model: FEModel, pressure_mpa):
    f = np.zeros((model.n_nodes, 3))
    for faces in model.load_faces:
        f += apply_pressure(model.nodes, faces, pressure_mpa)
    return f

