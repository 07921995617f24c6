"""Vessel surfaces, centerlines and cross-section radial profiles.

All lengths are in millimetres.  Frames follow the convention
``binormal = tangent x normal`` so that ``(normal, binormal, tangent)`` is a
right-handed orthonormal basis, and a profile angle ``theta`` points along
``cos(theta) * normal + sin(theta) * binormal``.
"""

import dataclasses
import logging
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    EmptySurfaceError,
    GeometryError,
    InvalidSpecError,
    MultiBranchError,
    NonStarShapedError,
)
from .stl import read_stl_facets, write_stl

log = logging.getLogger(__name__)

MERGE_TOL = 1e-6
# vertices lying exactly on a cutting plane are treated as displaced this far
# along the plane normal
PLANE_TIE_OFFSET = 1e-9
# end slices are pulled inside the surface extent by this much
END_INSET = 1e-6


@dataclass
class TriSurface:
    vertices: np.ndarray
    triangles: np.ndarray
    normals: Optional[np.ndarray] = None

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(self.triangles) and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)
        ):
            raise GeometryError("triangle references a vertex index out of range")

    def areas(self):
        p = self.vertices[self.triangles]
        return 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)

    def edge_use_counts(self):
        """Unique undirected edges and how many triangles use each."""
        e = self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
        e.sort(axis=1)
        return np.unique(e, axis=0, return_counts=True)

    def boundary_edges(self):
        edges, counts = self.edge_use_counts()
        return edges[counts == 1]

    def is_watertight(self):
        _, counts = self.edge_use_counts()
        return bool(np.all(counts == 2))

    def write(self, path, binary=True):
        write_stl(path, self.vertices, self.triangles, binary=binary)


def merge_vertices(points, tol=MERGE_TOL):
    """Weld points that fall in the same ``tol`` grid cell.

    Returns the welded vertex array (first occurrence kept, in order of first
    appearance) and the index of each input point into it.
    """
    keys = np.floor(points / tol + 0.5).astype(np.int64)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    return points[first[order]], rank[inverse]


def load_stl(path, tol=MERGE_TOL):
    """Read an STL file and weld duplicate vertices.

    Degenerate facets (repeated vertex after welding, or zero area) are
    dropped and counted in a ``UserWarning``.
    """
    facets, normals = read_stl_facets(path)
    vertices, index = merge_vertices(facets.reshape(-1, 3), tol)
    tris = index.reshape(-1, 3)
    p = vertices[tris]
    area2 = np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)
    repeated = (
        (tris[:, 0] == tris[:, 1]) | (tris[:, 1] == tris[:, 2]) | (tris[:, 0] == tris[:, 2])
    )
    bad = repeated | (area2 <= tol * tol)
    if bad.any():
        warnings.warn(f"dropped {int(bad.sum())} degenerate triangles from {path}", stacklevel=2)
        tris, normals = tris[~bad], normals[~bad]
    if len(tris) == 0:
        raise EmptySurfaceError(f"{path}: no usable triangles")
    used = np.unique(tris)
    if len(used) < len(vertices):
        remap = np.full(len(vertices), -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        vertices, tris = vertices[used], remap[tris]
    return TriSurface(vertices, tris, normals)


# --------------------------------------------------------------------------
# synthetic geometry


@dataclass
class SyntheticAAASpec:
    """Gaussian-bulge aneurysm tube along +z, from z=0 to z=length.

    The default sac is fusiform: its meridional radius of curvature at the
    apex, ``bulge_width**2 / bulge_amplitude``, exceeds the apex radius, so
    pressure loads the apex mainly in membrane tension rather than bending.
    """

    length: float = 80.0
    base_radius: float = 12.5
    bulge_amplitude: float = 15.0
    bulge_center: float = 40.0
    bulge_width: float = 18.0
    asymmetry_offset: float = 0.0
    n_theta_facets: int = 128
    n_z_facets: int = 200
    lumen_radius: float = 9.0
    lumen_follows_bulge: bool = False
    roughness: float = 0.0
    seed: Optional[int] = None

    def validate(self):
        if self.length <= 0:
            raise InvalidSpecError("length must be > 0")
        if self.base_radius <= 0:
            raise InvalidSpecError("base_radius must be > 0")
        if self.bulge_amplitude < 0:
            raise InvalidSpecError("bulge_amplitude must be >= 0")
        if self.bulge_width <= 0:
            raise InvalidSpecError("bulge_width must be > 0")
        if not 0 < self.lumen_radius < self.base_radius:
            raise InvalidSpecError(
                f"lumen_radius ({self.lumen_radius}) must lie in (0, base_radius={self.base_radius})"
            )
        if self.n_theta_facets < 8 or self.n_z_facets < 8:
            raise InvalidSpecError("tessellation counts must be >= 8")
        if not 0 <= self.roughness < 0.5 * self.base_radius:
            raise InvalidSpecError("roughness must lie in [0, base_radius/2)")

    def bulge_shape(self, z):
        z = np.asarray(z, dtype=np.float64)
        return np.exp(-((z - self.bulge_center) ** 2) / (2.0 * self.bulge_width**2))

    def radius(self, z):
        return self.base_radius + self.bulge_amplitude * self.bulge_shape(z)

    def lateral_offset(self, z):
        return self.asymmetry_offset * self.bulge_shape(z)

    def max_diameter(self):
        return 2.0 * float(self.radius(self.bulge_center))


def _f32(a):
    return np.asarray(a, dtype=np.float32).astype(np.float64)


def tube_surface(centers, normals, binormals, radii, angles=None):
    """Triangulate an open tube through rings of points.

    ``radii`` has shape (n_rings, n_theta).  Ring ``j`` point ``i`` sits at
    ``centers[j] + radii[j, i] * (cos a_i normals[j] + sin a_i binormals[j])``.
    Triangles are wound with outward normals when ``angles`` increase
    counter-clockwise about the tangent.
    """
    centers = np.asarray(centers, dtype=np.float64)
    radii = np.asarray(radii, dtype=np.float64)
    nz, nt = radii.shape
    if angles is None:
        angles = 2.0 * np.pi * np.arange(nt) / nt
    c, s = np.cos(angles), np.sin(angles)
    dirs = c[None, :, None] * normals[:, None, :] + s[None, :, None] * binormals[:, None, :]
    verts = centers[:, None, :] + radii[..., None] * dirs
    j, i = np.meshgrid(np.arange(nz - 1), np.arange(nt), indexing="ij")
    a = j * nt + i
    b = j * nt + (i + 1) % nt
    c_ = (j + 1) * nt + (i + 1) % nt
    d = (j + 1) * nt + i
    tris = np.concatenate(
        [np.stack([a, b, c_], -1).reshape(-1, 3), np.stack([a, c_, d], -1).reshape(-1, 3)]
    )
    # interleave so the two halves of each quad are adjacent
    nq = (nz - 1) * nt
    tris = tris.reshape(2, nq, 3).transpose(1, 0, 2).reshape(-1, 3)
    return TriSurface(_f32(verts.reshape(-1, 3)), tris)


def synth_aaa(spec: SyntheticAAASpec):
    """Build ``(wall_outer, lumen)`` triangulated tubes for a synthetic AAA.

    Coordinates are rounded to float32 so binary STL round trips are exact.
    """
    spec.validate()
    z = np.linspace(0.0, spec.length, spec.n_z_facets + 1)
    theta = 2.0 * np.pi * np.arange(spec.n_theta_facets) / spec.n_theta_facets
    g = spec.bulge_shape(z)
    radii = np.repeat(spec.radius(z)[:, None], spec.n_theta_facets, axis=1)
    if spec.roughness > 0:
        rng = np.random.default_rng(spec.seed)
        ks = np.arange(2, 5)
        amp = rng.uniform(-1.0, 1.0, len(ks)) * spec.roughness / len(ks)
        phase = rng.uniform(0.0, 2.0 * np.pi, len(ks))
        wave = (amp[:, None] * np.cos(ks[:, None] * theta[None, :] + phase[:, None])).sum(0)
        radii = radii + g[:, None] * wave[None, :]
    normals = np.tile([1.0, 0.0, 0.0], (len(z), 1))
    binormals = np.tile([0.0, 1.0, 0.0], (len(z), 1))
    centers = np.stack([spec.lateral_offset(z), np.zeros_like(z), z], axis=1)
    wall = tube_surface(centers, normals, binormals, radii, theta)

    lumen_centers = np.stack([np.zeros_like(z), np.zeros_like(z), z], axis=1)
    if spec.lumen_follows_bulge:
        lumen_centers[:, 0] = spec.lateral_offset(z)
    lumen_r = np.full((len(z), spec.n_theta_facets), spec.lumen_radius)
    lumen = tube_surface(lumen_centers, normals, binormals, lumen_r, theta)
    return wall, lumen


# --------------------------------------------------------------------------
# centerline and slicing


@dataclass
class Centerline:
    points: np.ndarray
    tangents: np.ndarray
    normals: np.ndarray
    binormals: np.ndarray

    def __len__(self):
        return len(self.points)

    @property
    def length(self):
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())

    def to_dict(self):
        return {
            "points": self.points.tolist(),
            "tangents": self.tangents.tolist(),
            "normals": self.normals.tolist(),
            "binormals": self.binormals.tolist(),
            "length_mm": self.length,
        }


def _unit(v):
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n == 0:
        raise InvalidSpecError("zero-length direction vector")
    return v / n


def _perpendicular_basis(axis):
    e = np.eye(3)[int(np.argmin(np.abs(axis)))]
    u = e - (e @ axis) * axis
    u /= np.linalg.norm(u)
    return u, np.cross(axis, u)


def parallel_transport_frames(tangents):
    """Rotation-minimizing (normal, binormal) frames along unit tangents."""
    t = np.asarray(tangents, dtype=np.float64)
    n = np.empty_like(t)
    n[0], _ = _perpendicular_basis(t[0])
    for i in range(1, len(t)):
        k = np.cross(t[i - 1], t[i])
        s = np.linalg.norm(k)
        c = float(np.dot(t[i - 1], t[i]))
        v = n[i - 1]
        if s > 1e-15:
            k = k / s
            ang = np.arctan2(s, c)
            v = v * np.cos(ang) + np.cross(k, v) * np.sin(ang) + k * (k @ v) * (1 - np.cos(ang))
        v = v - (v @ t[i]) * t[i]
        n[i] = v / np.linalg.norm(v)
    b = np.cross(t, n)
    return n, b


def centerline_from_points(points, end_tangent=None):
    """Centerline with finite-difference tangents and transported frames.

    If ``end_tangent`` is given the first and last tangents are set to it, so
    that the end cross-sections lie in the planes the ends were cut with.
    """
    points = np.asarray(points, dtype=np.float64)
    if len(points) < 2:
        raise InvalidSpecError("a centerline needs at least 2 points")
    if np.any(np.linalg.norm(np.diff(points, axis=0), axis=1) == 0):
        raise GeometryError("consecutive centerline points coincide")
    t = np.gradient(points, axis=0)
    t /= np.linalg.norm(t, axis=1, keepdims=True)
    if end_tangent is not None:
        t[0] = t[-1] = _unit(end_tangent)
    n, b = parallel_transport_frames(t)
    return Centerline(points, t, n, b)


def _plane_segments(surface, origin, normal):
    """Cut a surface with a plane.

    Returns ``(points, segments)`` where ``points`` holds one crossing point per
    cut mesh edge and ``segments`` is an (m, 2) array pairing crossing points
    that belong to the same triangle.
    """
    v, tri = surface.vertices, surface.triangles
    d = (v - origin) @ normal
    d[d == 0.0] = PLANE_TIE_OFFSET
    above = d[tri] > 0
    cnt = above.sum(axis=1)
    hit = np.nonzero((cnt == 1) | (cnt == 2))[0]
    if len(hit) == 0:
        return np.zeros((0, 3)), np.zeros((0, 2), dtype=np.int64)
    t = tri[hit]
    ab = above[hit]
    e0 = np.stack([t[:, 0], t[:, 1], t[:, 2]], 1)
    e1 = np.stack([t[:, 1], t[:, 2], t[:, 0]], 1)
    crosses = ab != np.roll(ab, -1, axis=1)
    # exactly two crossing edges per hit triangle
    lo = np.minimum(e0, e1)[crosses].reshape(-1, 2)
    hi = np.maximum(e0, e1)[crosses].reshape(-1, 2)
    keys = np.stack([lo.ravel(), hi.ravel()], 1)
    ukeys, inv = np.unique(keys, axis=0, return_inverse=True)
    a, b = ukeys[:, 0], ukeys[:, 1]
    w = d[a] / (d[a] - d[b])
    pts = v[a] + w[:, None] * (v[b] - v[a])
    return pts, inv.reshape(-1, 2)


def _chain(n_points, segments):
    """Group segments into closed loops and open chains of point indices."""
    adj = [[] for _ in range(n_points)]
    for s, (p, q) in enumerate(segments):
        adj[p].append((q, s))
        adj[q].append((p, s))
    used = np.zeros(len(segments), dtype=bool)
    loops, chains = [], []
    # start open chains at degree-1 points so they are walked end to end
    starts = [p for p in range(n_points) if len(adj[p]) == 1]
    starts += [p for p in range(n_points) if len(adj[p]) != 1]
    for start in starts:
        free = [(q, s) for q, s in adj[start] if not used[s]]
        if not free:
            continue
        path = [start]
        cur = start
        closed = False
        while True:
            nxt = [(q, s) for q, s in adj[cur] if not used[s]]
            if not nxt:
                break
            q, s = nxt[0]
            used[s] = True
            if q == start:
                closed = True
                break
            path.append(q)
            cur = q
        (loops if closed else chains).append(path)
    return loops, chains


def plane_sections(surface, origin, normal):
    """Closed loops and open chains (as 3D point arrays) cut by a plane."""
    pts, segs = _plane_segments(surface, np.asarray(origin, float), _unit(normal))
    loops, chains = _chain(len(pts), segs)
    return [pts[l] for l in loops], [pts[c] for c in chains]


def _to_plane(points, origin, u, v):
    rel = points - origin
    return np.stack([rel @ u, rel @ v], axis=1)


def polygon_area_centroid(xy):
    x, y = xy[:, 0], xy[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    if area == 0:
        raise GeometryError("degenerate cross-section polygon (zero area)")
    cx = ((x + xn) * cross).sum() / (6.0 * area)
    cy = ((y + yn) * cross).sum() / (6.0 * area)
    return area, np.array([cx, cy])


def extract_centerline(surface, axis_hint=(0.0, 0.0, 1.0), n_slices=50, margin=0.0):
    """Centerline through area-weighted centroids of planar slices.

    Slices are orthogonal to ``axis_hint`` and evenly spaced over the surface
    extent along it, shrunk by ``margin`` at both ends.
    """
    if n_slices < 2:
        raise InvalidSpecError("n_slices must be >= 2")
    axis = _unit(axis_hint)
    s = surface.vertices @ axis
    lo, hi = float(s.min()), float(s.max())
    if hi - lo <= 2 * (margin + END_INSET):
        raise GeometryError("surface has no extent along the axis hint")
    u, v = _perpendicular_basis(axis)
    heights = np.linspace(lo + margin + END_INSET, hi - margin - END_INSET, n_slices)
    centroids = np.empty((n_slices, 3))
    for j, h in enumerate(heights):
        origin = axis * h
        loops, chains = plane_sections(surface, origin, axis)
        if len(loops) != 1 or chains:
            raise MultiBranchError(
                f"slice {j} at {h:.4f} mm cuts {len(loops)} closed loops and "
                f"{len(chains)} open chains; exactly one closed loop is required"
            )
        _, c2 = polygon_area_centroid(_to_plane(loops[0], origin, u, v))
        centroids[j] = origin + c2[0] * u + c2[1] * v
    return centerline_from_points(centroids, end_tangent=axis)


@dataclass
class SliceProfile:
    center: np.ndarray
    normal: np.ndarray
    binormal: np.ndarray
    angles: np.ndarray
    radii: np.ndarray

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        self.normal = np.asarray(self.normal, dtype=np.float64)
        self.binormal = np.asarray(self.binormal, dtype=np.float64)
        self.angles = np.asarray(self.angles, dtype=np.float64)
        self.radii = np.asarray(self.radii, dtype=np.float64)

    @property
    def tangent(self):
        return np.cross(self.normal, self.binormal)

    @property
    def n_theta(self):
        return len(self.angles)

    def directions(self):
        c, s = np.cos(self.angles), np.sin(self.angles)
        return c[:, None] * self.normal + s[:, None] * self.binormal

    def points(self, radii=None):
        r = self.radii if radii is None else np.asarray(radii, dtype=np.float64)
        return self.center + r[:, None] * self.directions()

    def area(self):
        r = self.radii
        dth = np.diff(np.append(self.angles, self.angles[0] + 2 * np.pi))
        return float(0.5 * np.sum(r * np.roll(r, -1) * np.sin(dth)))

    def to_dict(self):
        return {k: np.asarray(getattr(self, k)).tolist() for k in
                ("center", "normal", "binormal", "angles", "radii")}


def uniform_angles(n_theta):
    return 2.0 * np.pi * np.arange(n_theta) / n_theta


def profiles_from_radii(centerline, radii, angles=None):
    radii = np.asarray(radii, dtype=np.float64)
    if radii.ndim == 1:
        radii = np.broadcast_to(radii[None, :], (len(centerline), len(radii)))
    if angles is None:
        angles = uniform_angles(radii.shape[1])
    return [
        SliceProfile(centerline.points[j], centerline.normals[j], centerline.binormals[j],
                     angles, radii[j].copy())
        for j in range(len(centerline))
    ]


def _ray_hits(xy_segments, dirs, eps=1e-9):
    """First hit distance and distinct-hit count for rays from the origin.

    Segment parameters are accepted with a small tolerance and hits closer
    than ``eps`` (relative) are merged, so a ray through a shared vertex
    counts once.
    """
    p = xy_segments[:, 0]
    e = xy_segments[:, 1] - p
    dx, dy = dirs[:, 0:1], dirs[:, 1:2]
    den = dx * e[None, :, 1] - dy * e[None, :, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (p[None, :, 0] * e[None, :, 1] - p[None, :, 1] * e[None, :, 0]) / den
        s = (p[None, :, 0] * dy - p[None, :, 1] * dx) / den
    ok = (den != 0) & (s >= -eps) & (s <= 1 + eps) & (t > 0)
    t = np.sort(np.where(ok, t, np.inf), axis=1)
    first = t[:, 0]
    scale = np.where(np.isfinite(first), first, 1.0)[:, None]
    fin = np.isfinite(t)
    distinct = fin[:, :1].astype(int).ravel()
    if t.shape[1] > 1:
        with np.errstate(invalid="ignore"):
            gap = np.diff(t, axis=1) > eps * scale
        distinct = distinct + (gap & fin[:, 1:]).sum(axis=1)
    return first, distinct


def _winding_contains(xy):
    """True if the closed polygon ``xy`` winds around the origin."""
    ang = np.arctan2(xy[:, 1], xy[:, 0])
    d = np.diff(np.append(ang, ang[0]))
    d = (d + np.pi) % (2 * np.pi) - np.pi
    return abs(d.sum()) > np.pi


def slice_profiles(surface, centerline, n_theta):
    """Ray-cast ``n_theta`` radii per centerline point in its frame plane."""
    if n_theta < 8:
        raise InvalidSpecError("n_theta must be >= 8")
    angles = uniform_angles(n_theta)
    dirs2 = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    out = []
    for j in range(len(centerline)):
        c = centerline.points[j]
        t, n, b = centerline.tangents[j], centerline.normals[j], centerline.binormals[j]
        loops, _ = plane_sections(surface, c, t)
        inside = []
        for loop in loops:
            xy = _to_plane(loop, c, n, b)
            if _winding_contains(xy):
                inside.append((abs(polygon_area_centroid(xy)[0]), xy))
        if not inside:
            raise NonStarShapedError(
                f"slice {j}: centerline point lies outside every cross-section loop",
                slice_index=j,
            )
        xy = min(inside, key=lambda a: a[0])[1]
        segs = np.stack([xy, np.roll(xy, -1, axis=0)], axis=1)
        first, nhit = _ray_hits(segs, dirs2)
        bad = np.nonzero(nhit != 1)[0]
        if len(bad):
            i = int(bad[0])
            what = "misses the surface" if nhit[i] == 0 else f"crosses the wall {nhit[i]} times"
            raise NonStarShapedError(
                f"slice {j}, angle {np.degrees(angles[i]):.2f} deg: ray {what}; "
                "cross-section is not star-shaped about the centerline",
                slice_index=j,
                angle=float(angles[i]),
            )
        out.append(SliceProfile(c, n, b, angles, first))
    return out


def smooth_profiles(profiles, iterations, lam=0.5, return_area_change=False):
    """Laplacian smoothing of profile radii over the (slice, angle) grid.

    Each radius moves by ``lam`` towards the mean of its four neighbours
    (periodic in angle); the first and last slices are held fixed.
    """
    if not 0.0 < lam <= 1.0:
        raise InvalidSpecError(f"smoothing factor must lie in (0, 1], got {lam}")
    nt = {p.n_theta for p in profiles}
    if len(nt) != 1:
        raise InvalidSpecError("profiles must share n_theta")
    r = np.stack([p.radii for p in profiles]).astype(np.float64)
    before = np.array([p.area() for p in profiles])
    for _ in range(int(iterations)):
        if len(r) < 3:
            break
        avg = 0.25 * (np.roll(r, 1, axis=1) + np.roll(r, -1, axis=1))[1:-1]
        avg += 0.25 * (r[:-2] + r[2:])
        r[1:-1] += lam * (avg - r[1:-1])
    new = [dataclasses.replace(p, radii=r[j].copy()) for j, p in enumerate(profiles)]
    change = np.array([p.area() for p in new]) - before
    log.debug("profile smoothing: max |area change| %.4g mm^2", np.abs(change).max())
    if return_area_change:
        return new, change
    return new


def surface_from_profiles(profiles):
    return tube_surface(
        np.stack([p.center for p in profiles]),
        np.stack([p.normal for p in profiles]),
        np.stack([p.binormal for p in profiles]),
        np.stack([p.radii for p in profiles]),
        profiles[0].angles,
    )


def profiles_to_dict(profiles):
    return {"n_slices": len(profiles), "profiles": [p.to_dict() for p in profiles]}


def straight_tube_profiles(radius, length, n_slices, n_theta):
    """Centerline and circular profiles of a straight tube along +z starting at the origin."""
    if radius <= 0 or length <= 0 or n_slices < 2:
        raise InvalidSpecError("need radius > 0, length > 0 and at least 2 slices")
    z = np.linspace(0.0, length, n_slices)
    cl = centerline_from_points(np.outer(z, [0.0, 0.0, 1.0]), end_tangent=(0.0, 0.0, 1.0))
    return cl, profiles_from_radii(cl, np.full(n_theta, float(radius)))
