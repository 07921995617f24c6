"""Mesh and result files: legacy ASCII VTK, Abaqus-style INP and JSON.

Floats are written with 17 significant digits, so files round-trip exactly
and identical meshes give byte-identical files.
"""

import io
import json
import os
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSpecError
from .topology import (
    HEX_EDGES,
    TET_EDGES,
    VTK_HEXAHEDRON,
    VTK_QUADRATIC_HEXAHEDRON,
    VTK_QUADRATIC_TETRA,
    VTK_TETRA,
    promote_quadratic,
)

FLOAT_FMT = "%.17g"
VTK_NODES_PER_CELL = {VTK_TETRA: 4, VTK_HEXAHEDRON: 8, VTK_QUADRATIC_TETRA: 10, VTK_QUADRATIC_HEXAHEDRON: 20}
INP_TYPES = {8: "C3D8", 20: "C3D20RH", 4: "C3D4", 10: "C3D10H"}
INP_NODES = {v: k for k, v in INP_TYPES.items()}
INP_NODES.update({"C3D8R": 8, "C3D8H": 8, "C3D20": 20, "C3D20R": 20, "C3D10": 10, "C3D4H": 4})
# element face holding local corners (2, 3, 7, 6) / (0, 1, 5, 4) of a hexahedron
INP_HEX_INNER_FACE = "S5"
INP_HEX_OUTER_FACE = "S3"


@dataclass
class CellBlock:
    cell_type: int
    cells: np.ndarray  # node ids, 0-based
    part: str = ""


@dataclass
class VolumeMesh:
    """Format-neutral volume mesh: nodes, typed cell blocks, sets and point data."""

    nodes: np.ndarray
    blocks: list
    node_sets: dict = field(default_factory=dict)
    point_data: dict = field(default_factory=dict)
    face_sets: dict = field(default_factory=dict)  # name -> (block index, element ids, face label)

    def cells_of_type(self, cell_type):
        arrs = [b.cells for b in self.blocks if b.cell_type == cell_type]
        if not arrs:
            return np.zeros((0, VTK_NODES_PER_CELL[cell_type]), dtype=np.int64)
        return np.vstack(arrs)

    @property
    def n_cells(self):
        return sum(len(b.cells) for b in self.blocks)


def _fmt_rows(arr, fmt, delimiter=" "):
    buf = io.StringIO()
    np.savetxt(buf, arr, fmt=fmt, delimiter=delimiter)
    return buf.getvalue()


# --------------------------------------------------------------------------
# building VolumeMesh objects


def wall_volume_mesh(wall, ilt=None, quadratic=False):
    """Wall hexes and optional ILT tets on one node table.

    Wall node ids are preserved; ILT-only nodes follow.  With ``quadratic``
    the elements are promoted to 20-node hexes / 10-node tets sharing
    mid-edge nodes.
    """
    from .tetfill import combine

    sets = {k.upper(): np.asarray(v) for k, v in wall.node_sets.items()}
    if ilt is not None:
        nodes, g = combine(wall, ilt)
        tets = g[ilt.tets]
        for k, v in ilt.node_sets.items():
            sets[k.upper()] = g[np.asarray(v)]
    else:
        nodes, tets = wall.nodes, None
    hexes = np.asarray(wall.hexes)
    ns, nt, nl = wall.shape
    eid = np.arange(len(hexes)).reshape(ns - 1, nt, nl)
    inner, outer = eid[:, :, -1].ravel(), eid[:, :, 0].ravel()
    face_sets = {"INNER_SURFACE_FACES": (0, inner, INP_HEX_INNER_FACE),
                 "OUTER_SURFACE_FACES": (0, outer, INP_HEX_OUTER_FACE)}
    if not quadratic:
        blocks = [CellBlock(VTK_HEXAHEDRON, hexes, "WALL")]
        if tets is not None:
            blocks.append(CellBlock(VTK_TETRA, tets, "ILT"))
        return VolumeMesh(nodes, blocks, sets, face_sets=face_sets)
    # promote both parts together so interface mid-edge nodes are shared
    n0 = len(nodes)
    h_edges = hexes[:, np.asarray(HEX_EDGES)].reshape(-1, 2)
    all_edges = [h_edges]
    if tets is not None:
        all_edges.append(tets[:, np.asarray(TET_EDGES)].reshape(-1, 2))
    pairs = np.sort(np.vstack(all_edges), axis=1)
    edges, inv = np.unique(pairs, axis=0, return_inverse=True)
    inv = inv.ravel()
    qnodes = np.vstack([nodes, 0.5 * (nodes[edges[:, 0]] + nodes[edges[:, 1]])])
    nh = len(h_edges)
    blocks = [CellBlock(VTK_QUADRATIC_HEXAHEDRON,
                        np.hstack([hexes, n0 + inv[:nh].reshape(len(hexes), 12)]), "WALL")]
    if tets is not None:
        blocks.append(CellBlock(VTK_QUADRATIC_TETRA,
                                np.hstack([tets, n0 + inv[nh:].reshape(len(tets), 6)]), "ILT"))
    for name, members in list(sets.items()):
        inset = np.zeros(n0, dtype=bool)
        inset[members] = True
        mids = np.nonzero(inset[edges[:, 0]] & inset[edges[:, 1]])[0] + n0
        sets[name] = np.concatenate([members, mids])
    return VolumeMesh(qnodes, blocks, sets, face_sets=face_sets)


def tet_volume_mesh(ilt, quadratic=False):
    sets = {k.upper(): np.asarray(v) for k, v in ilt.node_sets.items()}
    if quadratic:
        nodes, cells, _ = promote_quadratic(ilt.nodes, ilt.tets, TET_EDGES)
        return VolumeMesh(nodes, [CellBlock(VTK_QUADRATIC_TETRA, cells, "ILT")], sets)
    return VolumeMesh(ilt.nodes, [CellBlock(VTK_TETRA, np.asarray(ilt.tets), "ILT")], sets)


# --------------------------------------------------------------------------
# VTK legacy ASCII


def vtk_string(mesh: VolumeMesh, title="hexwall mesh"):
    out = io.StringIO()
    n = len(mesh.nodes)
    out.write("# vtk DataFile Version 3.0\n")
    out.write(title.replace("\n", " ")[:255] + "\n")
    out.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
    out.write(f"POINTS {n} double\n")
    out.write(_fmt_rows(np.asarray(mesh.nodes, dtype=np.float64), FLOAT_FMT))
    m = mesh.n_cells
    size = sum(len(b.cells) * (b.cells.shape[1] + 1) for b in mesh.blocks)
    out.write(f"CELLS {m} {size}\n")
    for b in mesh.blocks:
        c = np.asarray(b.cells, dtype=np.int64)
        out.write(_fmt_rows(np.hstack([np.full((len(c), 1), c.shape[1]), c]), "%d"))
    out.write(f"CELL_TYPES {m}\n")
    out.write("".join(f"{b.cell_type}\n" * len(b.cells) for b in mesh.blocks))
    out.write(f"CELL_DATA {m}\nSCALARS part_id int 1\nLOOKUP_TABLE default\n")
    out.write("".join(f"{i}\n" * len(b.cells) for i, b in enumerate(mesh.blocks)))
    if mesh.point_data:
        out.write(f"POINT_DATA {n}\n")
        for name, values in mesh.point_data.items():
            v = np.asarray(values, dtype=np.float64)
            if v.ndim == 1:
                out.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                out.write(_fmt_rows(v[:, None], FLOAT_FMT))
            elif v.shape[1:] == (3, 3):
                out.write(f"TENSORS {name} double\n")
                out.write(_fmt_rows(v.reshape(-1, 3), FLOAT_FMT))
            else:
                out.write(f"VECTORS {name} double\n")
                out.write(_fmt_rows(v, FLOAT_FMT))
    return out.getvalue()


def write_vtk(path, mesh: VolumeMesh, title="hexwall mesh"):
    with open(path, "w", newline="\n") as fh:
        fh.write(vtk_string(mesh, title))


def read_vtk(path) -> VolumeMesh:
    """Read the legacy ASCII unstructured grids written by :func:`write_vtk`."""
    with open(path) as fh:
        tokens = fh.read().split("\n")
    header = tokens[:4]
    if not header[0].startswith("# vtk") or header[2].strip() != "ASCII":
        raise InvalidSpecError(f"{path}: not a legacy ASCII VTK file")
    words = " ".join(tokens[3:]).split()
    pos = 0

    def take(k):
        nonlocal pos
        out = words[pos:pos + k]
        pos += k
        return out

    nodes = cells_flat = types = None
    point_data = {}
    section = None
    while pos < len(words):
        key = words[pos].upper()
        pos += 1
        if key == "DATASET":
            take(1)
        elif key == "POINTS":
            n, _ = take(2)
            nodes = np.array(take(3 * int(n)), dtype=np.float64).reshape(-1, 3)
        elif key == "CELLS":
            m, size = map(int, take(2))
            cells_flat = np.array(take(size), dtype=np.int64)
        elif key == "CELL_TYPES":
            m = int(take(1)[0])
            types = np.array(take(m), dtype=np.int64)
        elif key in ("CELL_DATA", "POINT_DATA"):
            section = key
            take(1)
        elif key == "SCALARS":
            name, _dtype = take(2)
            if words[pos] not in ("LOOKUP_TABLE",):
                take(1)
            take(2)
            count = len(nodes) if section == "POINT_DATA" else len(types)
            vals = np.array(take(count), dtype=np.float64)
            if section == "POINT_DATA":
                point_data[name] = vals
        elif key in ("VECTORS", "TENSORS"):
            name, _dtype = take(2)
            k = 3 if key == "VECTORS" else 9
            vals = np.array(take(k * len(nodes)), dtype=np.float64)
            point_data[name] = vals.reshape(-1, 3) if k == 3 else vals.reshape(-1, 3, 3)
        else:
            raise InvalidSpecError(f"{path}: unsupported VTK keyword {key!r}")
    if nodes is None or cells_flat is None or types is None:
        raise InvalidSpecError(f"{path}: missing POINTS, CELLS or CELL_TYPES")
    blocks = []
    i = 0
    cur_type, cur = None, []
    for t in types:
        k = cells_flat[i]
        conn = cells_flat[i + 1:i + 1 + k]
        i += k + 1
        if t != cur_type and cur:
            blocks.append(CellBlock(int(cur_type), np.array(cur)))
            cur = []
        cur_type = t
        cur.append(conn)
    if cur:
        blocks.append(CellBlock(int(cur_type), np.array(cur)))
    return VolumeMesh(nodes, blocks, point_data=point_data)


# --------------------------------------------------------------------------
# INP


def _inp_ids(ids, per_line=16):
    ids = np.asarray(ids, dtype=np.int64) + 1
    lines = []
    for s in range(0, len(ids), per_line):
        lines.append(", ".join(str(x) for x in ids[s:s + per_line]))
    return "\n".join(lines) + ("\n" if lines else "")


def inp_string(mesh: VolumeMesh, heading="hexwall mesh"):
    out = io.StringIO()
    out.write("*HEADING\n" + heading.replace("\n", " ") + "\n")
    out.write("*NODE\n")
    ids = np.arange(1, len(mesh.nodes) + 1)[:, None]
    out.write(_fmt_rows(np.hstack([ids, mesh.nodes]), "%d, " + ", ".join([FLOAT_FMT] * 3)))
    offset = 0
    block_offsets = []
    for b in mesh.blocks:
        c = np.asarray(b.cells, dtype=np.int64) + 1
        eids = np.arange(offset + 1, offset + len(c) + 1)[:, None]
        etype = INP_TYPES[c.shape[1]]
        elset = b.part or f"PART{len(block_offsets)}"
        out.write(f"*ELEMENT, TYPE={etype}, ELSET={elset}\n")
        rows = np.hstack([eids, c])
        if rows.shape[1] > 16:
            # continuation lines: at most 16 entries per line
            for r in rows:
                out.write(", ".join(map(str, r[:16])) + ",\n" + ", ".join(map(str, r[16:])) + "\n")
        else:
            out.write(_fmt_rows(rows, "%d", ", "))
        block_offsets.append(offset)
        offset += len(c)
    for name in sorted(mesh.node_sets):
        out.write(f"*NSET, NSET={name}\n")
        out.write(_inp_ids(np.unique(mesh.node_sets[name])))
    for name in sorted(mesh.face_sets):
        bi, elems, label = mesh.face_sets[name]
        out.write(f"*ELSET, ELSET={name}\n")
        out.write(_inp_ids(np.asarray(elems) + block_offsets[bi]))
        out.write(f"*SURFACE, NAME={name.replace('_FACES', '')}_S, TYPE=ELEMENT\n{name}, {label}\n")
    return out.getvalue()


def write_inp(path, mesh: VolumeMesh, heading="hexwall mesh"):
    with open(path, "w", newline="\n") as fh:
        fh.write(inp_string(mesh, heading))


_KW = re.compile(r"^\*\s*([A-Za-z ]+)(.*)$")


def _params(rest):
    out = {}
    for item in rest.split(","):
        if "=" in item:
            k, v = item.split("=", 1)
            out[k.strip().upper()] = v.strip()
    return out


def read_inp(path) -> VolumeMesh:
    """Read nodes, elements and node sets of a flat (part-less) INP file."""
    node_ids, coords = [], []
    blocks = []
    sets = {}
    mode, cur, expect = None, None, 0
    pending = []
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("**"):
                continue
            m = _KW.match(line)
            if m:
                kw = m.group(1).strip().upper()
                prm = _params(m.group(2))
                mode = None
                if kw == "NODE":
                    mode = "node"
                elif kw == "ELEMENT":
                    etype = prm.get("TYPE", "").upper()
                    if etype not in INP_NODES:
                        raise InvalidSpecError(f"{path}: unsupported element type {etype!r}")
                    expect = INP_NODES[etype]
                    ctype = {8: VTK_HEXAHEDRON, 20: VTK_QUADRATIC_HEXAHEDRON,
                             4: VTK_TETRA, 10: VTK_QUADRATIC_TETRA}[expect]
                    cur = CellBlock(ctype, [], prm.get("ELSET", ""))
                    blocks.append(cur)
                    mode = "element"
                elif kw == "NSET" and "GENERATE" not in prm:
                    cur = sets.setdefault(prm.get("NSET", "").upper(), [])
                    mode = "nset"
                continue
            vals = [v for v in line.split(",") if v.strip()]
            if mode == "node":
                node_ids.append(int(vals[0]))
                coords.append([float(v) for v in vals[1:4]])
            elif mode == "element":
                pending.extend(int(v) for v in vals)
                if len(pending) >= expect + 1:
                    cur.cells.append(pending[1:expect + 1])
                    pending = []
            elif mode == "nset":
                cur.extend(int(v) for v in vals)
    if not node_ids:
        raise InvalidSpecError(f"{path}: no *NODE data")
    node_ids = np.asarray(node_ids)
    lookup = np.full(node_ids.max() + 1, -1, dtype=np.int64)
    lookup[node_ids] = np.arange(len(node_ids))
    for b in blocks:
        b.cells = lookup[np.asarray(b.cells, dtype=np.int64).reshape(-1, VTK_NODES_PER_CELL[b.cell_type])]
    node_sets = {k: lookup[np.asarray(v, dtype=np.int64)] for k, v in sets.items()}
    return VolumeMesh(np.asarray(coords, dtype=np.float64), blocks, node_sets)


def read_mesh(path) -> VolumeMesh:
    p = str(path).lower()
    if not os.path.isfile(path):
        raise InvalidSpecError(f"mesh file not found: {path}")
    if p.endswith(".vtk"):
        return read_vtk(path)
    if p.endswith(".inp"):
        return read_inp(path)
    raise InvalidSpecError(f"unsupported mesh file {path!r} (expected .vtk or .inp)")


# --------------------------------------------------------------------------
# JSON


def write_json(path, obj):
    with open(path, "w", newline="\n") as fh:
        json.dump(obj, fh, indent=2, allow_nan=False, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")
