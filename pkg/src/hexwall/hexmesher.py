"""Structured multi-layer hexahedral wall meshes swept along a centerline.

Lattice indexing: slice ``j`` (along the centerline), angle ``i`` and
through-thickness layer ``k`` (``k = 0`` on the outer surface, ``k =
n_layers`` on the inner surface) map to node ``(j * n_theta + i) *
(n_layers + 1) + k``.  Hex corners follow :mod:`hexwall.topology` with local
axes (angle, inward, axial).
"""

import dataclasses
import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import quality
from .errors import InvalidSpecError, MeshError, OverlapError, WallSelfIntersectionError
from .topology import HEX_EDGES, hex_corner_dets, promote_quadratic

log = logging.getLogger(__name__)

INNER_SURFACE, OUTER_SURFACE = "inner_surface", "outer_surface"
TOP_RING, BOTTOM_RING = "top_ring", "bottom_ring"


def round_half_up(x):
    return int(np.floor(x + 0.5))


@dataclass
class MeshParams:
    wall_thickness: float = 1.5
    n_layers: int = 2
    target_element_size: float = 0.75
    n_theta: int = 0
    n_axial: int = 0
    # profile radii are the outer wall and the wall grows inward; False means
    # profiles describe the inner wall and it grows outward
    inward: bool = True

    def validate(self):
        if self.wall_thickness <= 0:
            raise InvalidSpecError("wall_thickness must be > 0")
        if self.n_layers < 1:
            raise InvalidSpecError("n_layers must be >= 1")
        if self.target_element_size <= 0:
            raise InvalidSpecError("target_element_size must be > 0")
        if self.n_theta < 0 or self.n_axial < 0:
            raise InvalidSpecError("n_theta / n_axial must be >= 0 (0 = automatic)")
        if 0 < self.n_theta < 8:
            raise InvalidSpecError("n_theta must be >= 8")

    @property
    def layer_thickness(self):
        return self.wall_thickness / self.n_layers

    def resolve_n_theta(self, mean_radius):
        if self.n_theta:
            return self.n_theta
        n = max(8, round_half_up(2.0 * np.pi * mean_radius / self.target_element_size))
        return n + (n % 2)

    def resolve_n_axial(self, length):
        if self.n_axial:
            return self.n_axial
        return max(2, round_half_up(length / self.target_element_size))


@dataclass
class HexWallMesh:
    nodes: np.ndarray
    hexes: np.ndarray
    node_sets: dict
    face_sets: dict
    shape: tuple  # (n_slices, n_theta, n_layers)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elements(self):
        return len(self.hexes)

    def lattice_ids(self):
        ns, nt, nl = self.shape
        return np.arange(ns * nt * (nl + 1)).reshape(ns, nt, nl + 1)

    def inner_rings(self):
        """Inner-surface node ids and coordinates, each shaped (n_slices, n_theta[, 3])."""
        ids = self.lattice_ids()[:, :, -1]
        return ids, self.nodes[ids]

    def edge_length_mean(self):
        p = self.nodes[self.hexes]
        e = p[:, HEX_EDGES[:, 1]] - p[:, HEX_EDGES[:, 0]]
        return float(np.linalg.norm(e, axis=2).mean())


@dataclass
class Hex20Mesh:
    nodes: np.ndarray
    hexes: np.ndarray  # (m, 20)
    n_corner_nodes: int
    node_sets: dict
    base: HexWallMesh = field(repr=False)

    @property
    def n_nodes(self):
        return len(self.nodes)


@dataclass
class QuadSurface:
    nodes: np.ndarray  # the volume mesh's node array, shared
    quads: np.ndarray

    def normals_and_areas(self):
        """Area-weighted normal of each bilinear quad (exact for bilinear patches)."""
        p = self.nodes[self.quads]
        # vector area of a bilinear quad equals half the cross of its diagonals
        va = 0.5 * np.cross(p[:, 2] - p[:, 0], p[:, 3] - p[:, 1])
        return va

    def area(self):
        """Total area of the bilinear quads (2x2 Gauss)."""
        p = self.nodes[self.quads]
        g = 1.0 / np.sqrt(3.0)
        total = 0.0
        for xi in (-g, g):
            for eta in (-g, g):
                dxi = 0.25 * ((1 - eta) * (p[:, 1] - p[:, 0]) + (1 + eta) * (p[:, 2] - p[:, 3]))
                deta = 0.25 * ((1 - xi) * (p[:, 3] - p[:, 0]) + (1 + xi) * (p[:, 2] - p[:, 1]))
                total += np.linalg.norm(np.cross(dxi, deta), axis=1).sum()
        return float(total)


def build_ring(profile, params: MeshParams):
    """Planar (n_theta, n_layers + 1, 3) node grid of one cross-section."""
    params.validate()
    r = profile.radii
    t = params.wall_thickness
    outer = r if params.inward else r + t
    inner = outer - t
    if np.any(inner <= 0):
        i = int(np.argmin(inner))
        raise WallSelfIntersectionError(
            f"wall thickness {t} mm exceeds the section radius {r[i]:.4f} mm at angle "
            f"{np.degrees(profile.angles[i]):.2f} deg (inner radius {inner[i]:.4f} mm)"
        )
    k = np.arange(params.n_layers + 1)
    radii = outer[:, None] - k[None, :] * params.layer_thickness
    return profile.center + radii[..., None] * profile.directions()[:, None, :]


@dataclass
class OverlapIssue:
    slice_pair: tuple
    angle_index: int
    angle: float
    clearance_ratio: float
    kind: str  # "error" (rings cross) or "warning" (near-tangent)


def detect_overlap(centerline, profiles, extra_radius=0.0, warn_clearance=0.1):
    """Check adjacent rings for crossing radial segments.

    Along each radial segment, the axial gap to the next ring varies linearly
    from its value at the centerline to its value at the outer point.  The
    ratio of the outer gap to the centerline gap is the clearance; a
    non-positive clearance means the two segments cross, a clearance under
    ``warn_clearance`` is reported as a warning.  One issue (the worst angle)
    is reported per offending slice pair.
    """
    issues = []
    tangents = (
        centerline.tangents if centerline is not None else np.stack([p.tangent for p in profiles])
    )
    for j in range(len(profiles) - 1):
        a, b = profiles[j], profiles[j + 1]
        tbar = tangents[j] + tangents[j + 1]
        tbar /= np.linalg.norm(tbar)
        gc = float((b.center - a.center) @ tbar)
        pa = a.points(a.radii + extra_radius)
        pb = b.points(b.radii + extra_radius)
        ratio = ((pb - pa) @ tbar) / gc if gc > 0 else np.full(len(pa), -np.inf)
        i = int(np.argmin(ratio))
        if ratio[i] <= 0:
            kind = "error"
        elif ratio[i] < warn_clearance:
            kind = "warning"
        else:
            continue
        issues.append(OverlapIssue((j, j + 1), i, float(a.angles[i]), float(ratio[i]), kind))
    return issues


def sweep(profiles, params: MeshParams, centerline=None, check_overlap=True):
    """Stack one ring per profile and connect consecutive rings with hexahedra."""
    params.validate()
    if len(profiles) < 2:
        raise InvalidSpecError("sweep needs at least 2 profiles")
    nts = {p.n_theta for p in profiles}
    if len(nts) != 1:
        raise InvalidSpecError(f"profiles disagree on n_theta: {sorted(nts)}")
    if check_overlap:
        extra = 0.0 if params.inward else params.wall_thickness
        issues = detect_overlap(centerline, profiles, extra_radius=extra)
        errors = [x for x in issues if x.kind == "error"]
        for w in issues:
            if w.kind == "warning":
                log.warning("rings %s nearly touch (clearance %.3f)", w.slice_pair, w.clearance_ratio)
        if errors:
            pairs = [x.slice_pair for x in errors]
            raise OverlapError(
                f"adjacent rings cross at slice pairs {pairs[:10]}"
                f"{' ...' if len(pairs) > 10 else ''}; use more slices or smooth the profiles",
                pairs=pairs,
            )
    ns, nt, nl = len(profiles), nts.pop(), params.n_layers
    rings = np.stack([build_ring(p, params) for p in profiles])
    nodes = rings.reshape(-1, 3)
    ids = np.arange(len(nodes)).reshape(ns, nt, nl + 1)
    j, i, k = np.meshgrid(np.arange(ns - 1), np.arange(nt), np.arange(nl), indexing="ij")
    i1 = (i + 1) % nt
    hexes = np.stack(
        [ids[j, i, k], ids[j, i1, k], ids[j, i1, k + 1], ids[j, i, k + 1],
         ids[j + 1, i, k], ids[j + 1, i1, k], ids[j + 1, i1, k + 1], ids[j + 1, i, k + 1]],
        axis=-1,
    )
    # element order: slice, angle, layer
    outer_faces = hexes[:, :, 0][..., [0, 1, 5, 4]].reshape(-1, 4)
    inner_faces = hexes[:, :, nl - 1][..., [2, 3, 7, 6]].reshape(-1, 4)
    hexes = hexes.reshape(-1, 8)
    mesh = HexWallMesh(
        nodes=nodes,
        hexes=hexes,
        node_sets={
            INNER_SURFACE: ids[:, :, nl].ravel(),
            OUTER_SURFACE: ids[:, :, 0].ravel(),
            TOP_RING: ids[-1].ravel(),
            BOTTOM_RING: ids[0].ravel(),
        },
        face_sets={"inner_faces": inner_faces, "outer_faces": outer_faces},
        shape=(ns, nt, nl),
    )
    dets = hex_corner_dets(nodes, hexes)
    bad = np.nonzero((dets <= 0).any(axis=1))[0]
    if len(bad):
        raise MeshError(
            f"{len(bad)} hexahedra have non-positive corner Jacobians (first: {bad[:10].tolist()})"
        )
    return mesh


def laplace_smooth_mesh(mesh: HexWallMesh, iterations=10, lam=0.5):
    """Smooth through-thickness node placement.

    Every node stays on the radial ray of its column, between the column's
    outer and inner surface nodes, so the surfaces and the wall thickness are
    untouched.  Interior nodes move by ``lam`` towards the mean ray parameter
    of their six lattice neighbours; end rings are fixed.  An iteration that
    would lower the minimum scaled Jacobian is rolled back and smoothing stops.
    """
    if not 0.0 < lam <= 1.0:
        raise InvalidSpecError(f"smoothing factor must lie in (0, 1], got {lam}")
    ns, nt, nl = mesh.shape
    ids = mesh.lattice_ids()
    x = mesh.nodes[ids]
    p0 = x[:, :, :1]
    d = x[:, :, -1:] - p0
    s = ((x - p0) * d).sum(-1) / (d * d).sum(-1)
    nodes = mesh.nodes.copy()
    if nl < 2 or ns < 3:
        return dataclasses.replace(mesh, nodes=nodes)
    sj0 = quality.hex_scaled_jacobians(nodes, mesh.hexes)[0].min()
    interior = (slice(1, ns - 1), slice(None), slice(1, nl))
    for it in range(int(iterations)):
        avg = (np.roll(s, 1, axis=1) + np.roll(s, -1, axis=1))
        avg[1:-1] += s[:-2] + s[2:]
        avg[:, :, 1:-1] += s[:, :, :-2] + s[:, :, 2:]
        s_new = s.copy()
        s_new[interior] += lam * (avg[interior] / 6.0 - s[interior])
        trial = nodes.copy()
        trial[ids[interior]] = (p0 + s_new[..., None] * d)[interior]
        sj = quality.hex_scaled_jacobians(trial, mesh.hexes)[0]
        if sj.min() < sj0 - 1e-12:
            worst = int(np.argmin(sj))
            warnings.warn(
                f"smoothing iteration {it} rolled back: element {worst} would drop to "
                f"scaled Jacobian {sj[worst]:.4f}",
                stacklevel=2,
            )
            break
        s, nodes = s_new, trial
    return dataclasses.replace(mesh, nodes=nodes)


def promote_to_hex20(mesh: HexWallMesh):
    nodes, hexes20, edges = promote_quadratic(mesh.nodes, mesh.hexes, HEX_EDGES)
    n0 = mesh.n_nodes
    sets = {}
    for name, members in mesh.node_sets.items():
        inset = np.zeros(n0, dtype=bool)
        inset[members] = True
        mids = np.nonzero(inset[edges[:, 0]] & inset[edges[:, 1]])[0] + n0
        sets[name] = np.concatenate([np.asarray(members), mids])
    return Hex20Mesh(nodes, hexes20, n0, sets, mesh)


def extract_surface(mesh: HexWallMesh, which="inner"):
    """Inner or outer wall surface quads, wound to point out of the wall."""
    if which not in ("inner", "outer"):
        raise InvalidSpecError("which must be 'inner' or 'outer'")
    return QuadSurface(mesh.nodes, mesh.face_sets[f"{which}_faces"])
