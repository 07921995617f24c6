"""Element quality metrics and threshold reports.

Hexahedra are judged by the scaled Jacobian and by the interior angles of
their six quadrilateral faces; tetrahedra by volumetric skew and by the
interior angles of their four triangular faces.

The scaled Jacobian of a hexahedron is the minimum, over its 8 corners, of
the determinant of the three unit edge vectors leaving the corner (corner
evaluation only).  Volumetric skew of a tetrahedron is
``1 - V / V_reg(R)`` with ``R`` the circumradius and
``V_reg(R) = 8 R^3 / (9 sqrt 3)`` the volume of the regular tetrahedron
inscribed in the same sphere; flat tetrahedra get skew 1.
"""

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .topology import HEX_CORNER_NEIGHBORS, HEX_FACES, TET_FACES

REGULAR_TET_VOLUME_PER_R3 = 8.0 / (9.0 * np.sqrt(3.0))
FLAT_TET_RTOL = 1e-12


@dataclass
class QualityThresholds:
    jacobian_min: float = 0.6
    quad_angle_range: tuple = (45.0, 135.0)
    tri_angle_range: tuple = (30.0, 120.0)
    # the failure cutoff for volumetric skew is not standardised; 0.95 is a
    # common choice and can be changed
    skew_max: float = 0.95

    def validate(self):
        from .errors import InvalidSpecError

        if not 0 < self.jacobian_min <= 1:
            raise InvalidSpecError("jacobian_min must lie in (0, 1]")
        for name in ("quad_angle_range", "tri_angle_range"):
            lo, hi = getattr(self, name)
            if not 0 <= lo < hi <= 180:
                raise InvalidSpecError(f"{name} must be a nonempty range within [0, 180]")
        if not 0 < self.skew_max <= 1:
            raise InvalidSpecError("skew_max must lie in (0, 1]")


# --------------------------------------------------------------------------
# vectorised metrics


def hex_scaled_jacobians(nodes, hexes):
    """Scaled Jacobian per hexahedron and a mask of degenerate elements."""
    p = np.asarray(nodes, dtype=np.float64)[np.asarray(hexes)]
    e = p[:, HEX_CORNER_NEIGHBORS] - p[:, :, None, :]
    lengths = np.linalg.norm(e, axis=3)
    degenerate = (lengths == 0).any(axis=(1, 2))
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = e / lengths[..., None]
    dets = np.linalg.det(np.where(lengths[..., None] > 0, unit, 0.0))
    sj = dets.min(axis=1)
    sj[degenerate] = 0.0
    return sj, degenerate


def _polygon_corner_angles(p):
    """Interior angles (degrees) at every corner of polygons ``p`` (m, n, 3)."""
    prev = np.roll(p, 1, axis=1) - p
    nxt = np.roll(p, -1, axis=1) - p
    cross = np.linalg.norm(np.cross(prev, nxt), axis=2)
    dot = (prev * nxt).sum(axis=2)
    ang = np.degrees(np.arctan2(cross, dot))
    zero = (np.linalg.norm(prev, axis=2) == 0) | (np.linalg.norm(nxt, axis=2) == 0)
    ang[zero] = np.nan
    return ang


def _angle_extrema(faces_xyz, m):
    ang = _polygon_corner_angles(faces_xyz.reshape(-1, faces_xyz.shape[-2], 3)).reshape(m, -1)
    degenerate = np.isnan(ang).any(axis=1)
    with np.errstate(invalid="ignore"):
        lo = np.where(degenerate, np.nan, np.nanmin(np.where(np.isnan(ang), np.inf, ang), axis=1))
        hi = np.where(degenerate, np.nan, np.nanmax(np.where(np.isnan(ang), -np.inf, ang), axis=1))
    return lo, hi, degenerate


def hex_face_angles(nodes, hexes):
    """(min, max, degenerate) interior angle over all six faces of each hex."""
    p = np.asarray(nodes, dtype=np.float64)[np.asarray(hexes)]
    return _angle_extrema(p[:, HEX_FACES], len(p))


def tet_face_angles(nodes, tets):
    p = np.asarray(nodes, dtype=np.float64)[np.asarray(tets)]
    return _angle_extrema(p[:, TET_FACES], len(p))


def tet_vol_skews(nodes, tets):
    p = np.asarray(nodes, dtype=np.float64)[np.asarray(tets)]
    e = p[:, 1:] - p[:, :1]
    vol = np.abs(np.linalg.det(e)) / 6.0
    scale = np.linalg.norm(e, axis=2).max(axis=1)
    flat = vol <= FLAT_TET_RTOL * scale**3
    skew = np.ones(len(p))
    ok = ~flat
    if ok.any():
        # circumcentre c (relative to p0) solves 2 e_i . c = |e_i|^2
        c = np.linalg.solve(2.0 * e[ok], (e[ok] ** 2).sum(axis=2)[..., None])[..., 0]
        r = np.linalg.norm(c, axis=1)
        skew[ok] = 1.0 - vol[ok] / (REGULAR_TET_VOLUME_PER_R3 * r**3)
    return np.clip(skew, 0.0, 1.0)


# --------------------------------------------------------------------------
# single-element helpers


def scaled_jacobian_hex(corners):
    sj, _ = hex_scaled_jacobians(np.asarray(corners, dtype=np.float64), np.arange(8)[None])
    return float(sj[0])


def quad_angles(corners):
    ang = _polygon_corner_angles(np.asarray(corners, dtype=np.float64)[None])[0]
    return float(np.min(ang)), float(np.max(ang))


def tri_angles(corners):
    return quad_angles(corners)


def vol_skew_tet(corners):
    return float(tet_vol_skews(np.asarray(corners, dtype=np.float64), np.arange(4)[None])[0])


# --------------------------------------------------------------------------
# reports


@dataclass
class PartQuality:
    name: str
    element_type: str  # "hex" or "tet"
    n_elements: int
    n_nodes: int
    min_angle: np.ndarray
    max_angle: np.ndarray
    degenerate: np.ndarray
    thresholds: QualityThresholds
    scaled_jacobian: Optional[np.ndarray] = None
    skew: Optional[np.ndarray] = None

    @property
    def angle_range(self):
        t = self.thresholds
        return t.quad_angle_range if self.element_type == "hex" else t.tri_angle_range

    def jacobian_failures(self):
        if self.scaled_jacobian is None:
            return None
        return (self.scaled_jacobian < self.thresholds.jacobian_min) | self.degenerate

    def skew_failures(self):
        if self.skew is None:
            return None
        return self.skew > self.thresholds.skew_max

    def angle_failures(self):
        lo, hi = self.angle_range
        with np.errstate(invalid="ignore"):
            return self.degenerate | (self.min_angle < lo) | (self.max_angle > hi)

    def summary(self):
        def count(mask):
            return None if mask is None else int(mask.sum())

        def worst(arr, fn):
            return None if arr is None or len(arr) == 0 else int(fn(arr))

        ang_fail = self.angle_failures()
        out = {
            "element_type": self.element_type,
            "n_elements": self.n_elements,
            "n_nodes": self.n_nodes,
            "failed_jacobian": count(self.jacobian_failures()),
            "min_jacobian": None if self.scaled_jacobian is None else float(self.scaled_jacobian.min()),
            "worst_jacobian_element": worst(self.scaled_jacobian, np.argmin),
            "failed_skew": count(self.skew_failures()),
            "max_skew": None if self.skew is None else float(self.skew.max()),
            "worst_skew_element": worst(self.skew, np.argmax),
            "failed_angle": int(ang_fail.sum()),
            "failed_angle_percent": 100.0 * float(ang_fail.mean()) if self.n_elements else 0.0,
            "min_angle": float(np.nanmin(self.min_angle)) if self.n_elements else None,
            "max_angle": float(np.nanmax(self.max_angle)) if self.n_elements else None,
            "worst_min_angle_element": worst(np.nan_to_num(self.min_angle, nan=-1.0), np.argmin),
            "worst_max_angle_element": worst(np.nan_to_num(self.max_angle, nan=361.0), np.argmax),
            "degenerate": int(self.degenerate.sum()),
        }
        return out


def _count_nodes(cells):
    return int(len(np.unique(np.asarray(cells)))) if len(cells) else 0


def assess_hexes(name, nodes, hexes, thresholds, n_nodes=None):
    sj, deg = hex_scaled_jacobians(nodes, hexes)
    lo, hi, deg_a = hex_face_angles(nodes, hexes)
    return PartQuality(
        name, "hex", len(hexes), _count_nodes(hexes) if n_nodes is None else n_nodes,
        lo, hi, deg | deg_a, thresholds, scaled_jacobian=sj,
    )


def assess_tets(name, nodes, tets, thresholds, n_nodes=None):
    lo, hi, deg = tet_face_angles(nodes, tets)
    return PartQuality(
        name, "tet", len(tets), _count_nodes(tets) if n_nodes is None else n_nodes,
        lo, hi, deg, thresholds, skew=tet_vol_skews(nodes, tets),
    )


@dataclass
class QualityReport:
    parts: list
    thresholds: QualityThresholds = field(default_factory=QualityThresholds)

    def part(self, name):
        for p in self.parts:
            if p.name == name:
                return p
        raise KeyError(name)

    def summary(self):
        return {p.name: p.summary() for p in self.parts}

    def to_dict(self, include_arrays=False):
        t = self.thresholds
        out = {
            "thresholds": {
                "jacobian_min": t.jacobian_min,
                "quad_angle_range": list(t.quad_angle_range),
                "tri_angle_range": list(t.tri_angle_range),
                "skew_max": t.skew_max,
            },
            "parts": self.summary(),
        }
        if include_arrays:
            arrays = {}
            for p in self.parts:
                a = {"min_angle": p.min_angle.tolist(), "max_angle": p.max_angle.tolist()}
                if p.scaled_jacobian is not None:
                    a["scaled_jacobian"] = p.scaled_jacobian.tolist()
                if p.skew is not None:
                    a["vol_skew"] = p.skew.tolist()
                arrays[p.name] = a
            out["elements"] = arrays
        return out

    def to_json(self, include_arrays=False):
        return json.dumps(self.to_dict(include_arrays), indent=2, allow_nan=False,
                          default=_json_default)

    def table(self):
        """Plain-text summary with one column per part, ``N/A`` where a metric does not apply."""
        rows = [
            ("No. of elements", "n_elements", "{:,}"),
            ("No. of nodes", "n_nodes", "{:,}"),
            ("No. of elements failed to Jacobian", "failed_jacobian", "{:,}"),
            ("Min. Jacobian", "min_jacobian", "{:.2f}"),
            ("No. of elements failed to volumetric skew", "failed_skew", "{:,}"),
            ("Max. vol. skew", "max_skew", "{:.2f}"),
            ("No. of elements failed to min/max angle", "failed_angle", "{:,}"),
            ("Min angle", "min_angle", "{:.1f}°"),
            ("Max angle", "max_angle", "{:.1f}°"),
        ]
        summ = self.summary()
        names = [p.name for p in self.parts]
        width = max(len(r[0]) for r in rows) + 2
        colw = max(12, *(len(n) + 2 for n in names))
        lines = ["Part".ljust(width) + "".join(n.rjust(colw) for n in names)]
        for label, key, fmt in rows:
            cells = []
            for n in names:
                v = summ[n][key]
                cells.append(("N/A" if v is None else fmt.format(v)).rjust(colw))
            lines.append(label.ljust(width) + "".join(cells))
        return "\n".join(lines)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o))


def quality_report(wall, ilt=None, thresholds: Optional[QualityThresholds] = None):
    thresholds = thresholds or QualityThresholds()
    thresholds.validate()
    parts = [assess_hexes("wall", wall.nodes, wall.hexes, thresholds)]
    if ilt is not None:
        parts.append(assess_tets("ilt", ilt.nodes, ilt.tets, thresholds))
    return QualityReport(parts, thresholds)
