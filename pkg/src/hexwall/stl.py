"""STL reading and writing (binary and ASCII).

Binary files store float32 coordinates; writing then reading a surface whose
coordinates are float32-representable gives back the exact same bits.
"""

import re
import struct

import numpy as np

from .errors import EmptySurfaceError, STLParseError

BINARY_FACET = np.dtype(
    [("normal", "<f4", (3,)), ("vertices", "<f4", (3, 3)), ("attr", "<u2")]
)

_TOKEN = re.compile(rb"\S+")


def read_stl_facets(path):
    """Return ``(facets, normals)`` with shapes (m, 3, 3) and (m, 3), float64."""
    with open(path, "rb") as fh:
        data = fh.read()
    if _looks_binary(data):
        return _parse_binary(data)
    return _parse_ascii(data)


def _looks_binary(data):
    if len(data) >= 84:
        (count,) = struct.unpack_from("<I", data, 80)
        if len(data) == 84 + 50 * count:
            return True
    return not data.lstrip()[:5].lower() == b"solid"


def _parse_binary(data):
    if len(data) < 84:
        raise STLParseError("truncated binary STL header", offset=len(data))
    (count,) = struct.unpack_from("<I", data, 80)
    if count == 0:
        raise EmptySurfaceError("binary STL declares zero facets")
    expected = 84 + 50 * count
    if len(data) < expected:
        # offset of the first facet that is incomplete
        complete = (len(data) - 84) // 50
        raise STLParseError(
            f"binary STL declares {count} facets but holds {complete}",
            offset=84 + 50 * complete,
        )
    rec = np.frombuffer(data, dtype=BINARY_FACET, count=count, offset=84)
    facets = rec["vertices"].astype(np.float64)
    normals = rec["normal"].astype(np.float64)
    if not np.all(np.isfinite(facets)):
        bad = int(np.nonzero(~np.isfinite(facets).all(axis=(1, 2)))[0][0])
        raise STLParseError("non-finite vertex coordinate", offset=84 + 50 * bad + 12)
    return facets, normals


def _parse_ascii(data):
    tokens = [(m.group(0), m.start()) for m in _TOKEN.finditer(data)]
    pos = 0

    def expect(word):
        nonlocal pos
        if pos >= len(tokens):
            raise STLParseError(f"unexpected end of file, expected '{word}'", offset=len(data))
        tok, off = tokens[pos]
        if tok.lower() != word:
            raise STLParseError(
                f"expected '{word}', found '{tok.decode(errors='replace')}'", offset=off
            )
        pos += 1

    def floats(n):
        nonlocal pos
        out = []
        for _ in range(n):
            if pos >= len(tokens):
                raise STLParseError("unexpected end of file in number list", offset=len(data))
            tok, off = tokens[pos]
            try:
                out.append(float(tok))
            except ValueError:
                raise STLParseError(
                    f"bad number '{tok.decode(errors='replace')}'", offset=off
                ) from None
            pos += 1
        return out

    expect(b"solid")
    while pos < len(tokens) and tokens[pos][0].lower() not in (b"facet", b"endsolid"):
        pos += 1  # solid name

    facets, normals = [], []
    while True:
        if pos >= len(tokens):
            raise STLParseError("missing 'endsolid'", offset=len(data))
        tok, off = tokens[pos]
        if tok.lower() == b"endsolid":
            break
        expect(b"facet")
        expect(b"normal")
        normals.append(floats(3))
        expect(b"outer")
        expect(b"loop")
        tri = []
        for _ in range(3):
            expect(b"vertex")
            tri.append(floats(3))
        expect(b"endloop")
        expect(b"endfacet")
        facets.append(tri)
    if not facets:
        raise EmptySurfaceError("ASCII STL contains no facets")
    return np.asarray(facets, dtype=np.float64), np.asarray(normals, dtype=np.float64)


def _facet_normals(facets):
    n = np.cross(facets[:, 1] - facets[:, 0], facets[:, 2] - facets[:, 0])
    norm = np.linalg.norm(n, axis=1, keepdims=True)
    return np.divide(n, norm, out=np.zeros_like(n), where=norm > 0)


def write_stl(path, vertices, triangles, binary=True, name="hexwall"):
    vertices = np.asarray(vertices, dtype=np.float64)
    triangles = np.asarray(triangles, dtype=np.int64)
    facets = vertices[triangles]
    normals = _facet_normals(facets)
    if binary:
        rec = np.zeros(len(facets), dtype=BINARY_FACET)
        rec["normal"] = normals
        rec["vertices"] = facets
        header = name.encode()[:80].ljust(80, b" ")
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(struct.pack("<I", len(facets)))
            fh.write(rec.tobytes())
        return
    lines = [f"solid {name}"]
    for n, tri in zip(normals, facets):
        lines.append("  facet normal {!r} {!r} {!r}".format(*map(float, n)))
        lines.append("    outer loop")
        for v in tri:
            lines.append("      vertex {!r} {!r} {!r}".format(*map(float, v)))
        lines.append("    endloop")
        lines.append("  endfacet")
    lines.append(f"endsolid {name}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
