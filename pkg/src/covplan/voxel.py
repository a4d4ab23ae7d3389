"""Dense boolean occupancy lattice built by conservative triangle/box overlap."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numba as nb
import numpy as np

from .mesh import TriangleMesh

GRID_MAGIC = b"CVPLGRID" + b"\0" * 7 + b"\1"
MAX_CELLS = 2**31
# relative inflation of the half box in the SAT test; touching counts as overlap
_BOX_EPS = 1e-9


class GridError(ValueError):
    pass


def lattice_for_bounds(lo, hi, voxel_size: float, pad: float = 1.5):
    """Origin and dims of a lattice covering [lo, hi] with ``pad`` voxels each side.

    With the default 1.5 the box minimum sits on a cell centre, so a plane at
    the minimum coordinate occupies exactly one layer of cells.
    """
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    origin = lo - pad * voxel_size
    extent = (hi - lo) / voxel_size
    dims = np.ceil(extent - 1e-9).astype(np.int64) + int(math.ceil(2 * pad))
    dims = np.maximum(dims, 1)
    return origin, dims


@dataclass(frozen=True)
class VoxelOccupancyGrid:
    origin: np.ndarray
    voxel_size: float
    dims: tuple[int, int, int]
    occupied: np.ndarray  # bool, shape == dims, indexed [ix, iy, iz]

    def __post_init__(self):
        if not self.voxel_size > 0:
            raise GridError("voxel_size must be positive")
        if min(self.dims) < 1:
            raise GridError("dims must be >= 1 on every axis")
        occ = np.ascontiguousarray(self.occupied, dtype=np.bool_)
        if occ.shape != tuple(self.dims):
            raise GridError("occupancy shape does not match dims")
        occ.flags.writeable = False
        object.__setattr__(self, "occupied", occ)
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    @property
    def upper(self) -> np.ndarray:
        return self.origin + np.asarray(self.dims) * self.voxel_size

    def cell_of(self, point) -> tuple[int, int, int]:
        idx = np.floor((np.asarray(point, dtype=np.float64) - self.origin) / self.voxel_size)
        return tuple(int(i) for i in idx)

    def contains(self, point) -> bool:
        p = np.asarray(point, dtype=np.float64)
        return bool(np.all(p >= self.origin) and np.all(p <= self.upper))

    def is_occupied(self, point) -> bool:
        i, j, k = self.cell_of(point)
        nx, ny, nz = self.dims
        if 0 <= i < nx and 0 <= j < ny and 0 <= k < nz:
            return bool(self.occupied[i, j, k])
        return False

    def cell_centers(self, mask: np.ndarray | None = None) -> np.ndarray:
        idx = np.argwhere(self.occupied if mask is None else mask)
        return self.origin + (idx + 0.5) * self.voxel_size

    def save(self, path: str | Path) -> None:
        write_grid(path, self.origin, self.voxel_size, self.dims, self.occupied.astype(np.uint8))

    @classmethod
    def load(cls, path: str | Path) -> VoxelOccupancyGrid:
        origin, vs, dims, payload = read_grid(path)
        if payload.dtype != np.uint8:
            raise GridError("file holds a distance payload, not occupancy")
        return cls(origin, vs, dims, payload.astype(bool))


def write_grid(path, origin, voxel_size, dims, payload: np.ndarray) -> None:
    """Flat binary lattice: magic, origin (3 f64), voxel size (f64), dims (3 u32), payload."""
    with open(path, "wb") as fh:
        fh.write(GRID_MAGIC)
        fh.write(struct.pack("<3d", *map(float, origin)))
        fh.write(struct.pack("<d", float(voxel_size)))
        fh.write(struct.pack("<3I", *map(int, dims)))
        fh.write(np.ascontiguousarray(payload).astype(payload.dtype.newbyteorder("<")).tobytes())


def read_grid(path):
    data = Path(path).read_bytes()
    if data[:16] != GRID_MAGIC:
        raise GridError("bad magic")
    origin = np.array(struct.unpack_from("<3d", data, 16))
    (vs,) = struct.unpack_from("<d", data, 40)
    dims = struct.unpack_from("<3I", data, 48)
    n = int(np.prod(dims))
    body = data[60:]
    if len(body) == n:
        payload = np.frombuffer(body, dtype=np.uint8)
    elif len(body) == 4 * n:
        payload = np.frombuffer(body, dtype="<f4").astype(np.float32)
    else:
        raise GridError("payload size does not match dims")
    return origin, vs, dims, payload.reshape(dims).copy()


@nb.njit(cache=True)
def _axis_test(ax, ay, az, v0, v1, v2, h):
    p0 = ax * v0[0] + ay * v0[1] + az * v0[2]
    p1 = ax * v1[0] + ay * v1[1] + az * v1[2]
    p2 = ax * v2[0] + ay * v2[1] + az * v2[2]
    r = h * (abs(ax) + abs(ay) + abs(az))
    lo = min(p0, min(p1, p2))
    hi = max(p0, max(p1, p2))
    return not (lo > r or hi < -r)


@nb.njit(cache=True)
def tri_box_overlap(center, h, a, b, c):
    """Separating-axis test of a triangle against a cube of half size ``h``."""
    v0 = a - center
    v1 = b - center
    v2 = c - center
    for k in range(3):
        if min(v0[k], min(v1[k], v2[k])) > h or max(v0[k], max(v1[k], v2[k])) < -h:
            return False
    e0 = v1 - v0
    e1 = v2 - v1
    e2 = v0 - v2
    for e in (e0, e1, e2):
        # cross products of the edge with the three box axes
        if not _axis_test(0.0, -e[2], e[1], v0, v1, v2, h):
            return False
        if not _axis_test(e[2], 0.0, -e[0], v0, v1, v2, h):
            return False
        if not _axis_test(-e[1], e[0], 0.0, v0, v1, v2, h):
            return False
    nx = e0[1] * e1[2] - e0[2] * e1[1]
    ny = e0[2] * e1[0] - e0[0] * e1[2]
    nz = e0[0] * e1[1] - e0[1] * e1[0]
    return _axis_test(nx, ny, nz, v0, v1, v2, h)


@nb.njit(cache=True)
def _voxelize_kernel(corners, origin, vs, dims, occ):
    h = 0.5 * vs * (1.0 + _BOX_EPS)
    center = np.empty(3)
    for t in range(corners.shape[0]):
        a = corners[t, 0]
        b = corners[t, 1]
        c = corners[t, 2]
        lo = np.empty(3, np.int64)
        hi = np.empty(3, np.int64)
        for k in range(3):
            mn = min(a[k], min(b[k], c[k]))
            mx = max(a[k], max(b[k], c[k]))
            lo[k] = max(0, int(np.floor((mn - origin[k]) / vs - 1e-6)))
            hi[k] = min(dims[k] - 1, int(np.floor((mx - origin[k]) / vs + 1e-6)))
        for i in range(lo[0], hi[0] + 1):
            center[0] = origin[0] + (i + 0.5) * vs
            for j in range(lo[1], hi[1] + 1):
                center[1] = origin[1] + (j + 0.5) * vs
                for k in range(lo[2], hi[2] + 1):
                    if occ[i, j, k]:
                        continue
                    center[2] = origin[2] + (k + 0.5) * vs
                    if tri_box_overlap(center, h, a, b, c):
                        occ[i, j, k] = True


def voxelize(mesh: TriangleMesh, voxel_size: float, bounds=None) -> VoxelOccupancyGrid:
    """Mark every cell whose closed box touches a triangle.

    ``bounds`` overrides the mesh bounding box (lo, hi); the lattice is always
    padded so the box minimum lands on a cell centre.
    """
    if not voxel_size > 0:
        raise GridError("voxel_size must be positive")
    lo, hi = bounds if bounds is not None else mesh.bounds()
    origin, dims = lattice_for_bounds(lo, hi, voxel_size)
    if int(np.prod(dims.astype(object))) > MAX_CELLS:
        raise GridError("grid too large")
    occ = np.zeros(tuple(dims), dtype=np.bool_)
    if mesh.n_triangles:
        _voxelize_kernel(np.ascontiguousarray(mesh.corners()), origin, float(voxel_size), dims, occ)
    return VoxelOccupancyGrid(origin, float(voxel_size), tuple(dims), occ)
