"""Stress recovery, principal stresses, percentile statistics and point probes."""

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .elements import HEX_EXTRAPOLATION, hex8_operators, tet4_operators

VOIGT_PAIRS = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)]


@dataclass
class StressField:
    """Nodal stress of one part.

    ``tensors`` holds xx, yy, zz, yz, xz, xy per node (MPa); ``node_ids`` are
    global ids into ``points``' source model.
    """

    node_ids: np.ndarray
    points: np.ndarray
    tensors: np.ndarray
    max_principal: np.ndarray
    part: str = "wall"
    provenance: str = "gauss-point stress extrapolated to corners, volume-weighted nodal average"

    @classmethod
    def from_tensors(cls, node_ids, points, tensors, **kw):
        return cls(np.asarray(node_ids), np.asarray(points), np.asarray(tensors),
                   principal_stresses(tensors)[:, 0], **kw)

    def principal(self):
        return principal_stresses(self.tensors)

    def full(self, n_nodes, fill=np.nan):
        """Max principal scattered onto a global node array."""
        out = np.full(n_nodes, fill)
        out[self.node_ids] = self.max_principal
        return out


def voigt_to_matrix(s):
    s = np.asarray(s, dtype=np.float64)
    m = np.empty(s.shape[:-1] + (3, 3))
    for k, (i, j) in enumerate(VOIGT_PAIRS):
        m[..., i, j] = s[..., k]
        m[..., j, i] = s[..., k]
    return m


def principal_stresses(s):
    """Eigenvalues (descending) of symmetric tensors in Voigt storage, shape (n, 3).

    Closed-form trigonometric solution of the characteristic cubic, followed by
    one Newton step on the largest root.
    """
    s = np.atleast_2d(np.asarray(s, dtype=np.float64))
    xx, yy, zz, yz, xz, xy = s.T
    q = (xx + yy + zz) / 3.0
    off = yz**2 + xz**2 + xy**2
    p2 = (xx - q) ** 2 + (yy - q) ** 2 + (zz - q) ** 2 + 2.0 * off
    p = np.sqrt(p2 / 6.0)
    safe = np.where(p > 0, p, 1.0)
    a, b_, c = (xx - q) / safe, (yy - q) / safe, (zz - q) / safe
    d, e, f = yz / safe, xz / safe, xy / safe
    det = a * (b_ * c - d * d) - f * (f * c - d * e) + e * (f * d - b_ * e)
    r = np.clip(det / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    e1 = q + 2.0 * p * np.cos(phi)
    e3 = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    # Newton polish on the characteristic polynomial det(A - l I)
    i1 = xx + yy + zz
    i2 = xx * yy + yy * zz + zz * xx - off
    i3 = xx * (yy * zz - yz**2) - xy * (xy * zz - yz * xz) + xz * (xy * yz - yy * xz)
    for lam in (e1, e3):
        g = -lam**3 + i1 * lam**2 - i2 * lam + i3
        dg = -3 * lam**2 + 2 * i1 * lam - i2
        ok = np.abs(dg) > 1e-8 * np.maximum(p2, 1e-300)
        step = np.where(ok, g / np.where(ok, dg, 1.0), 0.0)
        # the trigonometric root is already within ~sqrt(eps) * p; larger steps are noise
        lam -= np.clip(step, -1e-6 * p, 1e-6 * p)
    e1 = np.where(p > 0, e1, q)
    e3 = np.where(p > 0, e3, q)
    e2 = 3.0 * q - e1 - e3
    # rounding can swap near-equal roots
    return -np.sort(-np.stack([e1, e2, e3], axis=1), axis=1)


def max_principal(s):
    return principal_stresses(s)[:, 0]


def _element_corner_stress(part, nodes, u, bbar=True):
    """Corner stresses (m, k, 6) and element volumes (m,)."""
    D = part.material.elasticity_matrix()
    cells = np.asarray(part.cells)
    out, vols = [], []
    batch = 8192
    for s in range(0, len(cells), batch):
        c = cells[s:s + batch]
        X = nodes[c]
        ue = u[c].reshape(len(c), -1)
        if part.kind == "hex8":
            B, w = hex8_operators(X, bbar=bbar, first_element=s)
            sig_g = np.einsum("kl,bglm,bm->bgk", D, B, ue)
            out.append(np.einsum("ag,bgk->bak", HEX_EXTRAPOLATION, sig_g))
        else:
            B, w = tet4_operators(X, first_element=s)
            sig = np.einsum("kl,blm,bm->bk", D, B[:, 0], ue)
            out.append(np.repeat(sig[:, None, :], c.shape[1], axis=1))
        vols.append(w.sum(axis=1))
    return np.concatenate(out), np.concatenate(vols)


def recover_stress(model, displacements, part="wall", bbar=True) -> StressField:
    """Nodal stress tensors of one part of an :class:`FEModel`.

    Integration-point stresses (B-bar-consistent for hexahedra) are
    extrapolated to element corners and averaged at each node weighted by the
    volumes of the adjacent elements of the same part.
    """
    p = model.part(part)
    u = np.asarray(displacements, dtype=np.float64).reshape(-1, 3)
    corner, vol = _element_corner_stress(p, model.nodes, u, bbar)
    cells = np.asarray(p.cells)
    ids, inv = np.unique(cells.ravel(), return_inverse=True)
    w = np.repeat(vol, cells.shape[1])
    wsum = np.bincount(inv, weights=w, minlength=len(ids))
    tens = np.empty((len(ids), 6))
    flat = corner.reshape(-1, 6)
    for k in range(6):
        tens[:, k] = np.bincount(inv, weights=w * flat[:, k], minlength=len(ids)) / wsum
    return StressField.from_tensors(ids, model.nodes[ids], tens, part=part)


# --------------------------------------------------------------------------
# statistics


@dataclass
class ProbeResult:
    point: tuple
    node_id: int
    distance: float
    value: float

    def to_dict(self):
        return {"point": list(self.point), "node_id": self.node_id,
                "distance": self.distance, "value": self.value}


@dataclass
class StressStats:
    peak: float
    p99: float
    percentile_curve: np.ndarray  # stress at integer percentiles 0..100
    n_nodes: int
    probe_values: list = field(default_factory=list)
    convention: str = "nodal values, linear interpolation between order statistics"

    def percentile(self, q):
        return float(np.interp(q, np.arange(101), self.percentile_curve))

    def to_dict(self):
        return {
            "peak_MPa": self.peak,
            "p99_MPa": self.p99,
            "n_nodes": self.n_nodes,
            "percentile_convention": self.convention,
            "percentile_curve_MPa": [float(v) for v in self.percentile_curve],
            "probes": [p.to_dict() for p in self.probe_values],
        }


def stress_stats(field_or_values, probes: Optional[list] = None) -> StressStats:
    """Peak, 99th percentile and the 0..100 percentile curve of nodal max principal stress."""
    v = field_or_values.max_principal if isinstance(field_or_values, StressField) else field_or_values
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("empty stress field")
    curve = np.percentile(v, np.arange(101), method="linear")
    curve = np.maximum.accumulate(curve)
    return StressStats(float(v.max()), float(curve[99]), curve, int(v.size), list(probes or []))


def probe(field: StressField, points, max_distance=None):
    """Nearest-node values at query points.

    A warning is issued for points farther than ``max_distance`` (typically
    one element size) from every node of the field.
    """
    from scipy.spatial import cKDTree

    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    dist, idx = cKDTree(field.points).query(pts)
    out = []
    for pt, d, i in zip(pts, dist, idx):
        if max_distance is not None and d > max_distance:
            warnings.warn(f"probe point {pt.tolist()} is {d:.3g} mm from the nearest node "
                          "(outside the mesh?)", UserWarning, stacklevel=2)
        out.append(ProbeResult(tuple(float(x) for x in pt), int(field.node_ids[i]), float(d),
                               float(field.max_principal[i])))
    return out
