"""Truncated signed distance lattice of a triangle mesh.

Distances are exact to the nearest triangle inside the truncation band. The
sign comes from the angle-weighted pseudo-normal of the closest feature; when
that feature lies on a boundary or non-manifold edge, three axis-tilted
parity rays vote, and cells without a unanimous vote are left positive and
counted in ``ambiguous_cells``. Cells outside the band inherit the sign of
the band cells bordering their connected component.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numba as nb
import numpy as np
from scipy import ndimage

from .mesh import TriangleMesh
from .voxel import GridError, MAX_CELLS, lattice_for_bounds, read_grid, write_grid


@dataclass(frozen=True)
class SignedDistanceField:
    origin: np.ndarray
    voxel_size: float
    dims: tuple[int, int, int]
    distance: np.ndarray  # float32, shape == dims; value at cell centres
    truncation: float
    ambiguous_cells: int = 0
    closed: bool = True  # source mesh watertight and consistently oriented

    def __post_init__(self):
        d = np.ascontiguousarray(self.distance, dtype=np.float32)
        d.flags.writeable = False
        object.__setattr__(self, "distance", d)
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64))
        object.__setattr__(self, "dims", tuple(int(x) for x in self.dims))

    def sample(self, points) -> np.ndarray:
        """Trilinear interpolation at arbitrary points (clamped to the lattice)."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        out = np.empty(len(pts))
        for n in range(len(pts)):
            out[n] = trilinear(self.distance, self.origin, self.voxel_size, pts[n])
        return out

    def gradient(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        out = np.empty((len(pts), 3))
        for n in range(len(pts)):
            out[n] = central_gradient(self.distance, self.origin, self.voxel_size, pts[n])
        return out

    def in_bounds(self, point) -> bool:
        p = np.asarray(point, dtype=np.float64)
        hi = self.origin + np.asarray(self.dims) * self.voxel_size
        return bool(np.all(p >= self.origin) and np.all(p <= hi))

    def save(self, path: str | Path) -> None:
        write_grid(path, self.origin, self.voxel_size, self.dims, self.distance.astype(np.float32))

    @classmethod
    def load(cls, path: str | Path, truncation: float | None = None, closed: bool = True) -> SignedDistanceField:
        origin, vs, dims, payload = read_grid(path)
        if payload.dtype != np.float32:
            raise GridError("file holds an occupancy payload, not distances")
        trunc = float(np.abs(payload).max()) if truncation is None else truncation
        return cls(origin, vs, dims, payload, trunc, closed=closed)


@nb.njit(cache=True)
def trilinear(dist, origin, vs, p):
    nx, ny, nz = dist.shape
    f = np.empty(3)
    i0 = np.empty(3, np.int64)
    n = (nx, ny, nz)
    for k in range(3):
        u = (p[k] - origin[k]) / vs - 0.5
        u = min(max(u, 0.0), n[k] - 1.0)
        b = min(int(np.floor(u)), n[k] - 2) if n[k] > 1 else 0
        i0[k] = b
        f[k] = u - b if n[k] > 1 else 0.0
    x0, y0, z0 = i0[0], i0[1], i0[2]
    x1 = min(x0 + 1, nx - 1)
    y1 = min(y0 + 1, ny - 1)
    z1 = min(z0 + 1, nz - 1)
    fx, fy, fz = f[0], f[1], f[2]
    c00 = dist[x0, y0, z0] * (1 - fx) + dist[x1, y0, z0] * fx
    c10 = dist[x0, y1, z0] * (1 - fx) + dist[x1, y1, z0] * fx
    c01 = dist[x0, y0, z1] * (1 - fx) + dist[x1, y0, z1] * fx
    c11 = dist[x0, y1, z1] * (1 - fx) + dist[x1, y1, z1] * fx
    c0 = c00 * (1 - fy) + c10 * fy
    c1 = c01 * (1 - fy) + c11 * fy
    return c0 * (1 - fz) + c1 * fz


@nb.njit(cache=True)
def central_gradient(dist, origin, vs, p):
    g = np.empty(3)
    lo = np.empty(3)
    hi = np.empty(3)
    for k in range(3):
        lo[k] = origin[k] + 0.5 * vs
        hi[k] = origin[k] + (dist.shape[k] - 0.5) * vs
    q = p.copy()
    for k in range(3):
        plus = p[k] + vs <= hi[k]
        minus = p[k] - vs >= lo[k]
        if plus and minus:
            q[k] = p[k] + vs
            a = trilinear(dist, origin, vs, q)
            q[k] = p[k] - vs
            b = trilinear(dist, origin, vs, q)
            g[k] = (a - b) / (2 * vs)
        elif plus:
            q[k] = p[k] + vs
            a = trilinear(dist, origin, vs, q)
            g[k] = (a - trilinear(dist, origin, vs, p)) / vs
        elif minus:
            q[k] = p[k] - vs
            b = trilinear(dist, origin, vs, q)
            g[k] = (trilinear(dist, origin, vs, p) - b) / vs
        else:
            g[k] = 0.0
        q[k] = p[k]
    return g


# ---------------------------------------------------------------------------
# construction


def _pseudo_normals(mesh: TriangleMesh):
    """Face normals, per-corner edge and vertex pseudo-normals, ambiguity flags."""
    tris = mesh.triangles
    c = mesh.corners()
    raw = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
    fn = raw / np.linalg.norm(raw, axis=1, keepdims=True)

    # edge k of a triangle joins corner k and corner (k+1)%3
    e = np.stack([tris, np.roll(tris, -1, axis=1)], axis=2).reshape(-1, 2)
    key = np.sort(e, axis=1)
    uniq, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inv = inv.reshape(-1)
    edge_sum = np.zeros((len(uniq), 3))
    np.add.at(edge_sum, inv, np.repeat(fn, 3, axis=0))
    edge_n = edge_sum[inv].reshape(-1, 3, 3)
    edge_bad = (counts[inv] != 2).reshape(-1, 3)

    # angle-weighted vertex normals
    vn = np.zeros((mesh.n_vertices, 3))
    for k in range(3):
        a = c[:, (k + 1) % 3] - c[:, k]
        b = c[:, (k + 2) % 3] - c[:, k]
        cosang = np.einsum("ij,ij->i", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        ang = np.arccos(np.clip(cosang, -1.0, 1.0))
        np.add.at(vn, tris[:, k], fn * ang[:, None])
    vert_bad = np.zeros(mesh.n_vertices, dtype=bool)
    bad_edges = uniq[counts != 2]
    vert_bad[bad_edges.ravel()] = True
    return fn, edge_n, edge_bad, vn[tris], vert_bad[tris]


@nb.njit(cache=True, inline="always")
def _closest_on_triangle(px, py, pz, a, b, c):
    """Closest point and feature id: 0 face, 1..3 vertex a/b/c, 4..6 edge ab/bc/ca."""
    abx, aby, abz = b[0] - a[0], b[1] - a[1], b[2] - a[2]
    acx, acy, acz = c[0] - a[0], c[1] - a[1], c[2] - a[2]
    apx, apy, apz = px - a[0], py - a[1], pz - a[2]
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0 and d2 <= 0:
        return a[0], a[1], a[2], 1
    bpx, bpy, bpz = px - b[0], py - b[1], pz - b[2]
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0 and d4 <= d3:
        return b[0], b[1], b[2], 2
    vc = d1 * d4 - d3 * d2
    if vc <= 0 and d1 >= 0 and d3 <= 0:
        v = d1 / (d1 - d3)
        return a[0] + v * abx, a[1] + v * aby, a[2] + v * abz, 4
    cpx, cpy, cpz = px - c[0], py - c[1], pz - c[2]
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0 and d5 <= d6:
        return c[0], c[1], c[2], 3
    vb = d5 * d2 - d1 * d6
    if vb <= 0 and d2 >= 0 and d6 <= 0:
        w = d2 / (d2 - d6)
        return a[0] + w * acx, a[1] + w * acy, a[2] + w * acz, 6
    va = d3 * d6 - d5 * d4
    if va <= 0 and (d4 - d3) >= 0 and (d5 - d6) >= 0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return b[0] + w * (c[0] - b[0]), b[1] + w * (c[1] - b[1]), b[2] + w * (c[2] - b[2]), 5
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return a[0] + abx * v + acx * w, a[1] + aby * v + acy * w, a[2] + abz * v + acz * w, 0


@nb.njit(cache=True)
def _band_kernel(corners, fn, edge_n, edge_bad, vert_n, vert_bad, origin, vs, trunc, best, sgn, amb):
    nx, ny, nz = best.shape
    t2 = trunc * trunc
    p = np.empty(3)
    for t in range(corners.shape[0]):
        a = corners[t, 0]
        b = corners[t, 1]
        c = corners[t, 2]
        n = fn[t]
        lo = np.empty(3, np.int64)
        hi = np.empty(3, np.int64)
        for k in range(3):
            mn = min(a[k], min(b[k], c[k])) - trunc
            mx = max(a[k], max(b[k], c[k])) + trunc
            lo[k] = max(0, int(np.ceil((mn - origin[k]) / vs - 0.5)))
            hi[k] = min(best.shape[k] - 1, int(np.floor((mx - origin[k]) / vs - 0.5)))
        for i in range(lo[0], hi[0] + 1):
            p[0] = origin[0] + (i + 0.5) * vs
            for j in range(lo[1], hi[1] + 1):
                p[1] = origin[1] + (j + 0.5) * vs
                for k in range(lo[2], hi[2] + 1):
                    p[2] = origin[2] + (k + 0.5) * vs
                    plane = (p[0] - a[0]) * n[0] + (p[1] - a[1]) * n[1] + (p[2] - a[2]) * n[2]
                    if plane * plane >= best[i, j, k] or plane * plane >= t2:
                        continue
                    qx, qy, qz, feat = _closest_on_triangle(p[0], p[1], p[2], a, b, c)
                    dx = p[0] - qx
                    dy = p[1] - qy
                    dz = p[2] - qz
                    d2 = dx * dx + dy * dy + dz * dz
                    if d2 >= best[i, j, k] or d2 >= t2:
                        continue
                    best[i, j, k] = d2
                    if feat == 0:
                        pn = n
                        bad = False
                    elif feat <= 3:
                        pn = vert_n[t, feat - 1]
                        bad = vert_bad[t, feat - 1]
                    else:
                        pn = edge_n[t, feat - 4]
                        bad = edge_bad[t, feat - 4]
                    s = dx * pn[0] + dy * pn[1] + dz * pn[2]
                    sgn[i, j, k] = 1 if s >= 0 else -1
                    amb[i, j, k] = bad


@nb.njit(cache=True)
def _ray_hits(p, d, corners):
    """Number of triangles crossed by the ray p + s d, s > 0 (Moller-Trumbore)."""
    hits = 0
    for t in range(corners.shape[0]):
        a = corners[t, 0]
        e1 = corners[t, 1] - a
        e2 = corners[t, 2] - a
        h = np.cross(d, e2)
        det = e1 @ h
        if abs(det) < 1e-15:
            continue
        inv = 1.0 / det
        s = p - a
        u = inv * (s @ h)
        if u < 0.0 or u > 1.0:
            continue
        q = np.cross(s, e1)
        v = inv * (d @ q)
        if v < 0.0 or u + v > 1.0:
            continue
        if inv * (e2 @ q) > 0.0:
            hits += 1
    return hits


_PARITY_DIRS = np.array(
    [[0.0123, 0.0071, 1.0], [1.0, 0.0093, 0.0137], [0.0081, 1.0, -0.0119]]
)


def parity_inside(mesh: TriangleMesh, points) -> np.ndarray:
    """Inside test by majority of three ray-parity votes (for watertight meshes)."""
    corners = np.ascontiguousarray(mesh.corners())
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    votes = np.zeros(len(pts), dtype=np.int64)
    for d in _PARITY_DIRS:
        d = d / np.linalg.norm(d)
        for n, p in enumerate(pts):
            votes[n] += _ray_hits(p, d, corners) & 1
    return votes >= 2


def compute_sdf(mesh: TriangleMesh, voxel_size: float, truncation: float | None = None, bounds=None) -> SignedDistanceField:
    """Signed distance at every lattice cell centre, clamped to +-truncation.

    Negative inside material. ``truncation`` defaults to 10 voxels and must be
    at least two.
    """
    if not voxel_size > 0:
        raise GridError("voxel_size must be positive")
    truncation = 10.0 * voxel_size if truncation is None else float(truncation)
    if truncation < 2 * voxel_size - 1e-12:
        raise GridError("truncation must be >= 2 * voxel_size")
    lo, hi = bounds if bounds is not None else mesh.bounds()
    origin, dims = lattice_for_bounds(lo, hi, voxel_size, pad=3.5)
    if int(np.prod(dims.astype(object))) > MAX_CELLS:
        raise GridError("grid too large")
    shape = tuple(int(d) for d in dims)

    best = np.full(shape, np.inf)
    sgn = np.ones(shape, dtype=np.int8)
    amb = np.zeros(shape, dtype=np.bool_)
    fn, edge_n, edge_bad, vert_n, vert_bad = _pseudo_normals(mesh)
    corners = np.ascontiguousarray(mesh.corners())
    _band_kernel(corners, fn, edge_n, edge_bad, vert_n, vert_bad, origin, float(voxel_size),
                 truncation, best, sgn, amb)

    band = np.isfinite(best)
    ambiguous = 0
    if amb.any():
        idx = np.argwhere(amb & band)
        pts = origin + (idx + 0.5) * voxel_size
        votes = np.zeros(len(idx), dtype=np.int64)
        for d in _PARITY_DIRS:
            d = d / np.linalg.norm(d)
            for n, p in enumerate(pts):
                votes[n] += _ray_hits(p, d, corners) & 1
        unanimous_in = votes == 3
        unanimous_out = votes == 0
        undecided = ~(unanimous_in | unanimous_out)
        ambiguous = int(undecided.sum())
        s = np.where(unanimous_in, -1, 1).astype(np.int8)
        sgn[tuple(idx.T)] = s

    dist = np.full(shape, truncation, dtype=np.float64)
    dist[band] = np.sqrt(best[band]) * sgn[band]

    far = ~band
    if far.any():
        labels, nlab = ndimage.label(far)
        votes = np.zeros(nlab + 1)
        sgn_f = sgn.astype(np.float64)
        for axis in range(3):
            head = [slice(None)] * 3
            tail = [slice(None)] * 3
            head[axis] = slice(0, -1)
            tail[axis] = slice(1, None)
            for f_sl, b_sl in ((tuple(head), tuple(tail)), (tuple(tail), tuple(head))):
                m = far[f_sl] & band[b_sl]
                votes += np.bincount(labels[f_sl][m], weights=sgn_f[b_sl][m], minlength=nlab + 1)
        comp_sign = np.where(votes >= 0, 1.0, -1.0)
        dist[far] = truncation * comp_sign[labels[far]]

    np.clip(dist, -truncation, truncation, out=dist)
    return SignedDistanceField(origin, float(voxel_size), shape, dist.astype(np.float32), truncation, ambiguous,
                               is_closed(mesh))


def is_closed(mesh: TriangleMesh) -> bool:
    """True when every directed edge appears exactly once with its reverse also present."""
    t = np.asarray(mesh.triangles, dtype=np.int64)
    if len(t) == 0:
        return False
    directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    n = int(t.max()) + 1
    key = directed[:, 0] * n + directed[:, 1]
    rev = directed[:, 1] * n + directed[:, 0]
    if len(np.unique(key)) != len(key):
        return False
    return bool(np.isin(rev, key).all())
