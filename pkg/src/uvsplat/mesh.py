"""Template meshes with a UV layout and the UV -> surface lookup that anchors Gaussians.

A template is a triangle mesh whose faces carry per-corner texture coordinates.
Every point of UV space that falls inside a UV triangle corresponds to exactly
one point on the 3D surface (barycentric interpolation of the triangle's
vertices); points outside all triangles are "gutter" and anchor nothing.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import IndexOutOfRange, MalformedRecord, MissingTexCoords

_IGNORED_RECORDS = {"vn", "vp", "o", "g", "s", "usemtl", "mtllib", "l", "p"}

# Barycentric weights above -INSIDE_TOL count as inside (points on shared edges).
INSIDE_TOL = 1e-12
DEGENERATE_AREA = 1e-15


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TemplateMesh:
    vertices: np.ndarray  # (V, 3) float64, meters
    faces: np.ndarray  # (F, 3) int64
    uv_coords: np.ndarray  # (F, 3, 2) float64, per face corner

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        f = np.asarray(self.faces, dtype=np.int64)
        uv = np.asarray(self.uv_coords, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 3 or len(v) < 3:
            raise ValueError("template needs at least 3 vertices of shape (V, 3)")
        if f.ndim != 2 or f.shape[1] != 3 or len(f) < 1:
            raise ValueError("template needs at least 1 triangle of shape (F, 3)")
        if uv.shape != (len(f), 3, 2):
            raise ValueError(f"uv_coords must have shape {(len(f), 3, 2)}, got {uv.shape}")
        if f.min() < 0 or f.max() >= len(v):
            raise IndexOutOfRange("face references a vertex that does not exist")
        if np.any(uv < 0.0) or np.any(uv > 1.0):
            raise ValueError("uv coordinates must lie in [0, 1]^2")
        object.__setattr__(self, "vertices", _frozen(v))
        object.__setattr__(self, "faces", _frozen(f))
        object.__setattr__(self, "uv_coords", _frozen(uv))

    @property
    def n_faces(self):
        return len(self.faces)

    def to_obj(self):
        """Serialize as OBJ text with one `vt` per face corner."""
        out = io.StringIO()
        for x, y, z in self.vertices:
            out.write(f"v {x:.17g} {y:.17g} {z:.17g}\n")
        for u, v in self.uv_coords.reshape(-1, 2):
            out.write(f"vt {u:.17g} {v:.17g}\n")
        for k, (a, b, c) in enumerate(self.faces):
            t = 3 * k + 1
            out.write(f"f {a + 1}/{t} {b + 1}/{t + 1} {c + 1}/{t + 2}\n")
        return out.getvalue()


def _resolve(token, count, lineno, line):
    try:
        idx = int(token)
    except ValueError:
        raise MalformedRecord(lineno, line, f"bad index {token!r}") from None
    if idx == 0:
        raise IndexOutOfRange(f"line {lineno}: OBJ indices are 1-based, got 0")
    resolved = idx - 1 if idx > 0 else count + idx
    if not 0 <= resolved < count:
        raise IndexOutOfRange(f"line {lineno}: index {idx} out of range (have {count})")
    return resolved


def parse_obj(source) -> TemplateMesh:
    """Parse Wavefront OBJ text (a string or a text stream) into a TemplateMesh.

    Only ``v``, ``vt`` and ``f`` records are used; polygons are fan-triangulated
    (``f 1 2 3 4`` becomes ``(1, 2, 3)`` and ``(1, 3, 4)``). Every face corner
    must reference a texture coordinate.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    vertices, texcoords = [], []
    faces, face_uvs = [], []
    lineno = 0
    for lineno, raw in enumerate(source, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        key, args = parts[0], parts[1:]
        if key == "v":
            if len(args) not in (3, 4, 6, 7):
                raise MalformedRecord(lineno, raw.rstrip("\n"), "vertex needs 3 coordinates")
            try:
                vertices.append([float(a) for a in args[:3]])
            except ValueError:
                raise MalformedRecord(lineno, raw.rstrip("\n"), "non-numeric vertex") from None
        elif key == "vt":
            if len(args) not in (2, 3):
                raise MalformedRecord(lineno, raw.rstrip("\n"), "texcoord needs 2 values")
            try:
                u, v = float(args[0]), float(args[1])
            except ValueError:
                raise MalformedRecord(lineno, raw.rstrip("\n"), "non-numeric texcoord") from None
            if not (0.0 <= u <= 1.0 and 0.0 <= v <= 1.0):
                raise MalformedRecord(lineno, raw.rstrip("\n"), "texcoord outside [0, 1]")
            texcoords.append([u, v])
        elif key == "f":
            if len(args) < 3:
                raise MalformedRecord(lineno, raw.rstrip("\n"), "face needs at least 3 corners")
            corners = []
            for tok in args:
                fields = tok.split("/")
                if len(fields) < 2 or fields[1] == "":
                    raise MissingTexCoords(f"line {lineno}: face corner {tok!r} has no texcoord index")
                vi = _resolve(fields[0], len(vertices), lineno, raw.rstrip("\n"))
                ti = _resolve(fields[1], len(texcoords), lineno, raw.rstrip("\n"))
                corners.append((vi, ti))
            for k in range(1, len(corners) - 1):
                tri = (corners[0], corners[k], corners[k + 1])
                faces.append([c[0] for c in tri])
                face_uvs.append([texcoords[c[1]] for c in tri])
        elif key in _IGNORED_RECORDS:
            continue
        else:
            raise MalformedRecord(lineno, raw.rstrip("\n"), f"unknown record type {key!r}")
    if len(vertices) < 3 or not faces:
        raise MalformedRecord(lineno, "", "mesh needs at least 3 vertices and 1 face")
    return TemplateMesh(
        vertices=np.array(vertices, dtype=np.float64),
        faces=np.array(faces, dtype=np.int64),
        uv_coords=np.array(face_uvs, dtype=np.float64),
    )


def load_obj(path) -> TemplateMesh:
    with open(path, encoding="utf-8") as fh:
        return parse_obj(fh)


@numba.njit(cache=True)
def _barycentric(px, py, ax, ay, bx, by, cx, cy):
    v0x, v0y = bx - ax, by - ay
    v1x, v1y = cx - ax, cy - ay
    v2x, v2y = px - ax, py - ay
    den = v0x * v1y - v1x * v0y
    w1 = (v2x * v1y - v1x * v2y) / den
    w2 = (v0x * v2y - v2x * v0y) / den
    return 1.0 - w1 - w2, w1, w2


@numba.njit(cache=True)
def _locate_kernel(points, uv, n_cells, cell_start, cell_faces, out_face, out_bary):
    for k in range(points.shape[0]):
        px, py = points[k, 0], points[k, 1]
        ci = min(int(px * n_cells), n_cells - 1)
        cj = min(int(py * n_cells), n_cells - 1)
        cell = cj * n_cells + ci
        out_face[k] = -1
        # candidate lists are sorted by face id, so the first hit is the lowest id
        for e in range(cell_start[cell], cell_start[cell + 1]):
            f = cell_faces[e]
            w0, w1, w2 = _barycentric(px, py, uv[f, 0, 0], uv[f, 0, 1], uv[f, 1, 0],
                                      uv[f, 1, 1], uv[f, 2, 0], uv[f, 2, 1])
            if w0 >= -INSIDE_TOL and w1 >= -INSIDE_TOL and w2 >= -INSIDE_TOL:
                w0 = max(w0, 0.0)
                w1 = max(w1, 0.0)
                w2 = max(w2, 0.0)
                s = w0 + w1 + w2
                out_face[k] = f
                out_bary[k, 0] = w0 / s
                out_bary[k, 1] = w1 / s
                out_bary[k, 2] = w2 / s
                break


@dataclass(frozen=True)
class UvChartIndex:
    """Uniform grid over UV space; each cell lists the faces whose UV bbox touches it."""

    mesh: TemplateMesh
    n_cells: int
    cell_start: np.ndarray  # (n_cells**2 + 1,) CSR offsets
    cell_faces: np.ndarray  # face ids, ascending within each cell
    n_degenerate: int  # zero-area UV triangles that were skipped

    def locate(self, points):
        """Vectorized point location: returns (face_ids, barycentric) with -1 for gutter."""
        pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 2))
        face = np.empty(len(pts), dtype=np.int64)
        bary = np.zeros((len(pts), 3), dtype=np.float64)
        _locate_kernel(pts, self.mesh.uv_coords, self.n_cells, self.cell_start,
                       self.cell_faces, face, bary)
        return face, bary

    def surface_points(self, face, bary):
        tri = self.mesh.vertices[self.mesh.faces[np.maximum(face, 0)]]  # (N, 3, 3)
        pos = np.einsum("nk,nkd->nd", bary, tri)
        pos[face < 0] = 0.0
        return pos


def build_uv_index(mesh: TemplateMesh, grid_cells=None) -> UvChartIndex:
    """Bin UV triangles into a uniform grid (default ceil(sqrt(2F)) cells per axis)."""
    if grid_cells is None:
        grid_cells = math.ceil(math.sqrt(2 * mesh.n_faces))
    if grid_cells < 1:
        raise ValueError("grid_cells must be positive")
    uv = mesh.uv_coords
    a, b, c = uv[:, 0], uv[:, 1], uv[:, 2]
    area2 = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])
    good = np.abs(area2) > DEGENERATE_AREA
    lo = np.clip(np.floor((uv.min(axis=1) - 1e-9) * grid_cells), 0, grid_cells - 1).astype(np.int64)
    hi = np.clip(np.floor((uv.max(axis=1) + 1e-9) * grid_cells), 0, grid_cells - 1).astype(np.int64)

    buckets = [[] for _ in range(grid_cells * grid_cells)]
    for f in np.flatnonzero(good):
        for cj in range(lo[f, 1], hi[f, 1] + 1):
            row = cj * grid_cells
            for ci in range(lo[f, 0], hi[f, 0] + 1):
                buckets[row + ci].append(f)
    counts = np.array([len(bk) for bk in buckets], dtype=np.int64)
    cell_start = np.zeros(len(buckets) + 1, dtype=np.int64)
    np.cumsum(counts, out=cell_start[1:])
    cell_faces = np.fromiter((f for bk in buckets for f in bk), dtype=np.int64, count=int(counts.sum()))
    return UvChartIndex(mesh, int(grid_cells), _frozen(cell_start), _frozen(cell_faces),
                        int((~good).sum()))


def uv_to_surface(index: UvChartIndex, x_uv):
    """Map one UV point to (position, face_id, barycentric), or None in the gutter."""
    face, bary = index.locate(np.asarray(x_uv, dtype=np.float64)[None])
    if face[0] < 0:
        return None
    pos = index.surface_points(face, bary)[0]
    return pos, int(face[0]), bary[0]


@dataclass(frozen=True)
class UvGrid:
    """Texel-center samples of UV space at resolution R, row-major with v as the row."""

    resolution: int
    coords: np.ndarray  # (R*R, 2)
    valid_mask: np.ndarray  # (R*R,) bool
    face_ids: np.ndarray  # (R*R,) -1 where invalid
    barycentric: np.ndarray  # (R*R, 3)
    anchors: np.ndarray  # (R*R, 3) surface points, zero where invalid
    index: UvChartIndex = field(default=None, repr=False, compare=False)

    @property
    def count(self):
        """Number of valid points, i.e. how many Gaussians this grid instantiates."""
        return int(self.valid_mask.sum())

    @property
    def valid_coords(self):
        return self.coords[self.valid_mask]

    @property
    def valid_anchors(self):
        return self.anchors[self.valid_mask]


def texel_centers(resolution):
    c = (np.arange(resolution, dtype=np.float64) + 0.5) / resolution
    uu, vv = np.meshgrid(c, c, indexing="xy")
    return np.stack([uu.ravel(), vv.ravel()], axis=1)


def sample_uv_grid(index: UvChartIndex, resolution: int) -> UvGrid:
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    coords = texel_centers(resolution)
    face, bary = index.locate(coords)
    anchors = index.surface_points(face, bary)
    return UvGrid(int(resolution), _frozen(coords), _frozen(face >= 0), _frozen(face),
                  _frozen(bary), _frozen(anchors), index)
