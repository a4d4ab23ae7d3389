"""Voxel traversal line-of-sight test on the occupancy grid.

The walk steps through every cell the segment passes, in order. The start
cell is exempt. At the target end, the unbroken run of occupied cells that
leads into an occupied target cell is exempt too: targets lie on surfaces,
and a ray reaching such a target obliquely crosses a few cells of that same
surface just before arriving. Any other occupied cell blocks the ray. When
the target cell is free, only the target cell itself is exempt.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

from .voxel import VoxelOccupancyGrid


class RayCastError(ValueError):
    pass


@nb.njit(cache=True, nogil=True)
def _cell(p, origin, vs, dims, out):
    for k in range(3):
        c = int(math.floor((p[k] - origin[k]) / vs))
        out[k] = min(max(c, 0), dims[k] - 1)


@nb.njit(cache=True, nogil=True)
def segment_clear(occ, origin, vs, p0, p1):
    dims = occ.shape
    cell = np.empty(3, np.int64)
    _cell(p0, origin, vs, dims, cell)
    step = np.zeros(3, np.int64)
    t_max = np.full(3, np.inf)
    t_delta = np.full(3, np.inf)
    for k in range(3):
        d = p1[k] - p0[k]
        if d > 0:
            step[k] = 1
            t_max[k] = (origin[k] + (cell[k] + 1) * vs - p0[k]) / d
            t_delta[k] = vs / d
        elif d < 0:
            step[k] = -1
            t_max[k] = (origin[k] + cell[k] * vs - p0[k]) / d
            t_delta[k] = -vs / d

    pending = False  # occupied cells seen since the last free intermediate cell
    while True:
        ax = 0
        if t_max[1] < t_max[ax]:
            ax = 1
        if t_max[2] < t_max[ax]:
            ax = 2
        if t_max[ax] > 1.0:
            break  # current cell holds the segment end
        nxt = cell[ax] + step[ax]
        if nxt < 0 or nxt >= dims[ax]:
            break
        cell[ax] = nxt
        t_max[ax] += t_delta[ax]
        # is this the last cell?
        last = min(t_max[0], min(t_max[1], t_max[2])) > 1.0
        if last:
            break
        if occ[cell[0], cell[1], cell[2]]:
            pending = True
        elif pending:
            return False
    # the loop exits in the end cell
    if pending and not occ[cell[0], cell[1], cell[2]]:
        return False
    return True


def ray_cast(grid: VoxelOccupancyGrid, start, end) -> bool:
    """True when the segment from ``start`` to ``end`` is unobstructed."""
    p0 = np.asarray(start, dtype=np.float64)
    p1 = np.asarray(end, dtype=np.float64)
    if not (grid.contains(p0) and grid.contains(p1)):
        raise RayCastError("endpoint out of bounds")
    return bool(segment_clear(grid.occupied, grid.origin, grid.voxel_size, p0, p1))
