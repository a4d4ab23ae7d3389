"""Indexed triangle meshes and the OBJ / binary PLY readers."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

log = logging.getLogger(__name__)

MERGE_EPS = 1e-9
DEGENERATE_AREA = 1e-12


class MeshError(ValueError):
    """Raised for unreadable, malformed or empty mesh input."""


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    dropped_degenerate: int = field(default=0, compare=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise MeshError("index out of range")
        v.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def corners(self) -> np.ndarray:
        """(m, 3, 3) array of triangle corner coordinates."""
        return self.vertices[self.triangles]

    def face_normals(self) -> np.ndarray:
        c = self.corners()
        n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        length = np.linalg.norm(n, axis=1, keepdims=True)
        return n / np.where(length > 0, length, 1.0)

    def areas(self) -> np.ndarray:
        c = self.corners()
        return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        used = self.vertices[np.unique(self.triangles)] if self.n_triangles else self.vertices
        return used.min(axis=0), used.max(axis=0)

    def submesh(self, triangle_mask: np.ndarray) -> TriangleMesh:
        """Mesh made of the selected triangles, with unused vertices removed."""
        tris = self.triangles[np.asarray(triangle_mask)]
        used, inverse = np.unique(tris, return_inverse=True)
        return TriangleMesh(self.vertices[used], inverse.reshape(-1, 3))

    def save_obj(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for x, y, z in self.vertices:
                fh.write(f"v {x:.17g} {y:.17g} {z:.17g}\n")
            for a, b, c in self.triangles + 1:
                fh.write(f"f {a} {b} {c}\n")

    def save_ply(self, path: str | Path) -> None:
        header = (
            "ply\nformat binary_little_endian 1.0\n"
            f"element vertex {self.n_vertices}\n"
            "property double x\nproperty double y\nproperty double z\n"
            f"element face {self.n_triangles}\n"
            "property list uchar int vertex_indices\nend_header\n"
        )
        faces = np.zeros(self.n_triangles, dtype=[("n", "u1"), ("idx", "<i4", 3)])
        faces["n"] = 3
        faces["idx"] = self.triangles
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(self.vertices.astype("<f8").tobytes())
            fh.write(faces.tobytes())


def merge_meshes(meshes: list[TriangleMesh]) -> TriangleMesh:
    verts, tris, offset = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + offset)
        offset += m.n_vertices
    return TriangleMesh(np.concatenate(verts), np.concatenate(tris))


def clean_mesh(vertices: np.ndarray, triangles: np.ndarray) -> TriangleMesh:
    """Merge coincident vertices and drop degenerate triangles."""
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    if len(triangles) == 0 or len(vertices) == 0:
        raise MeshError("empty mesh")
    if triangles.min() < 0 or triangles.max() >= len(vertices):
        raise MeshError("index out of range")

    pairs = cKDTree(vertices).query_pairs(MERGE_EPS, output_type="ndarray")
    if len(pairs):
        n = len(vertices)
        adj = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
        _, labels = connected_components(adj, directed=False)
        # representative = first vertex of each component, in original order
        _, first = np.unique(labels, return_index=True)
        rep = first[labels]
        triangles = rep[triangles]

    used, inverse = np.unique(triangles, return_inverse=True)
    vertices = vertices[used]
    triangles = inverse.reshape(-1, 3)

    c = vertices[triangles]
    area = 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)
    keep = area >= DEGENERATE_AREA
    dropped = int((~keep).sum())
    if dropped:
        log.warning("dropped %d degenerate triangle(s)", dropped)
        triangles = triangles[keep]
        if len(triangles) == 0:
            raise MeshError("empty mesh")
        used, inverse = np.unique(triangles, return_inverse=True)
        vertices = vertices[used]
        triangles = inverse.reshape(-1, 3)
    return TriangleMesh(vertices, triangles, dropped_degenerate=dropped)


def load_mesh(path: str | Path) -> TriangleMesh:
    """Read an ASCII OBJ or binary little-endian PLY file.

    Polygons are fan-triangulated, vertices closer than 1e-9 m are merged and
    triangles with area below 1e-12 m^2 are dropped (the count is kept in
    ``dropped_degenerate``).
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise MeshError(f"cannot read {path}: {exc}") from exc
    if data.startswith(b"ply"):
        verts, tris = _parse_ply(data)
    elif path.suffix.lower() == ".obj" or data.lstrip()[:2] in (b"v ", b"# ", b"o ", b"g "):
        verts, tris = _parse_obj(data.decode("utf-8", errors="replace"))
    else:
        raise MeshError(f"unsupported format: {path.name}")
    return clean_mesh(verts, tris)


def _parse_obj(text: str):
    verts: list[list[float]] = []
    tris: list[tuple[int, int, int]] = []
    lines: list[int] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            try:
                verts.append([float(p) for p in parts[1:4]])
            except ValueError as exc:
                raise MeshError(f"line {lineno}: bad vertex record") from exc
        elif parts[0] == "f":
            idx = []
            for tok in parts[1:]:
                try:
                    i = int(tok.split("/")[0])
                except ValueError as exc:
                    raise MeshError(f"line {lineno}: bad face record") from exc
                if i == 0:
                    raise MeshError(f"line {lineno}: index out of range")
                idx.append(i - 1 if i > 0 else len(verts) + i)
            if len(idx) < 3:
                raise MeshError(f"line {lineno}: face with fewer than 3 vertices")
            for k in range(1, len(idx) - 1):
                tris.append((idx[0], idx[k], idx[k + 1]))
                lines.append(lineno)
    for (a, b, c), lineno in zip(tris, lines):
        if min(a, b, c) < 0 or max(a, b, c) >= len(verts):
            raise MeshError(f"line {lineno}: index out of range")
    return np.array(verts, dtype=np.float64).reshape(-1, 3), np.array(tris, dtype=np.int64).reshape(-1, 3)


_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _parse_ply(data: bytes):
    end = data.find(b"end_header")
    if end < 0:
        raise MeshError("ply: missing end_header")
    body_start = data.index(b"\n", end) + 1
    header = data[:end].decode("ascii", errors="replace").splitlines()
    if not any(h.strip() == "format binary_little_endian 1.0" for h in header):
        raise MeshError("unsupported format: only binary_little_endian PLY is read")

    elements: list[list] = []  # [name, count, [(prop_name, type | (count_t, item_t))]]
    for h in header:
        parts = h.split()
        if not parts:
            continue
        if parts[0] == "element":
            elements.append([parts[1], int(parts[2]), []])
        elif parts[0] == "property":
            if not elements:
                raise MeshError("ply: property before element")
            try:
                if parts[1] == "list":
                    elements[-1][2].append((parts[4], (_PLY_TYPES[parts[2]], _PLY_TYPES[parts[3]])))
                else:
                    elements[-1][2].append((parts[2], _PLY_TYPES[parts[1]]))
            except KeyError as exc:
                raise MeshError(f"ply: unknown property type in '{h}'") from exc

    pos = body_start
    verts = tris = None
    for name, count, props in elements:
        if all(not isinstance(t, tuple) for _, t in props):
            dtype = np.dtype([(p, "<" + t) for p, t in props])
            arr = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
            pos += dtype.itemsize * count
            if name == "vertex":
                verts = np.stack([arr["x"], arr["y"], arr["z"]], axis=1).astype(np.float64)
            continue
        if name == "face" and len(props) == 1:
            ct, it = (np.dtype("<" + t) for t in props[0][1])
            fast = np.dtype([("n", ct), ("idx", it, 3)])
            if pos + fast.itemsize * count <= len(data):
                arr = np.frombuffer(data, dtype=fast, count=count, offset=pos)
                if np.all(arr["n"] == 3):
                    tris = arr["idx"].astype(np.int64)
                    pos += fast.itemsize * count
                    continue
        faces = []
        for _ in range(count):
            for pname, t in props:
                if isinstance(t, tuple):
                    ct, it = np.dtype("<" + t[0]), np.dtype("<" + t[1])
                    k = int(np.frombuffer(data, ct, 1, pos)[0])
                    pos += ct.itemsize
                    vals = np.frombuffer(data, it, k, pos).astype(np.int64)
                    pos += it.itemsize * k
                    if name == "face" and pname in ("vertex_indices", "vertex_index"):
                        faces.append(vals)
                else:
                    pos += np.dtype(t).itemsize
        if name == "face":
            out = []
            for f in faces:
                if len(f) < 3:
                    raise MeshError("ply: face with fewer than 3 vertices")
                out.extend((f[0], f[k], f[k + 1]) for k in range(1, len(f) - 1))
            tris = np.array(out, dtype=np.int64).reshape(-1, 3)
    if verts is None or tris is None:
        raise MeshError("empty mesh")
    return verts, tris
