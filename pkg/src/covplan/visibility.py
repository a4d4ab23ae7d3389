"""Candidate rewards via the staged visibility test.

Stages run cheapest first and stop at the first rejection:
frustum -> self-occlusion mask -> SDF back-face -> voxel ray cast.

The SDF back-face stage is an accelerator only. Besides the per-component
sign rule it requires a certificate that the ray cast would also fail: some
point a few voxels from the target towards the candidate lies clearly inside
material and in a free occupancy cell, while the candidate sits clearly in
free space in a free cell. On a closed mesh the segment then has to cross the
surface in an occupied cell that is not part of the target's own surface run.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .body import SelfOcclusionMask
from .candidates import CandidateViewpoint, SensorModel
from .fibonacci import fib_table, nearest_fibonacci_index
from .raycast import segment_clear
from .sdf import SignedDistanceField, central_gradient, trilinear
from .voxel import VoxelOccupancyGrid

log = logging.getLogger(__name__)

STAGES = ("frustum", "mask", "sdf", "ray")
VISIBLE, REJ_FRUSTUM, REJ_MASK, REJ_SDF, REJ_RAY = 0, 1, 2, 3, 4
# sample distances (in occupancy voxels) for the SDF occlusion certificate
_CERT_STEPS = np.array([0.5, 1.0, 1.5, 2.0, 2.5, 3.0])
_GRAD_EPS = 1e-6


@dataclass
class CoverageMatrix:
    visible: np.ndarray  # (n_candidates, n_targets) bool
    stage_rejections: dict = field(default_factory=dict)
    sdf_enabled: bool = True

    @property
    def rewards(self) -> np.ndarray:
        return self.visible.sum(axis=1)

    @property
    def shape(self):
        return self.visible.shape

    def covered(self, candidate: int) -> np.ndarray:
        return np.flatnonzero(self.visible[candidate])

    def rows(self) -> list[frozenset]:
        return [frozenset(self.covered(c).tolist()) for c in range(self.visible.shape[0])]

    def save(self, path) -> None:
        """Header 'CVPLCOVM', u32 candidates, u32 targets, then per row u32 count + sorted u32 ids."""
        with open(path, "wb") as fh:
            fh.write(b"CVPLCOVM")
            fh.write(np.array(self.visible.shape, dtype="<u4").tobytes())
            for c in range(self.visible.shape[0]):
                ids = self.covered(c).astype("<u4")
                fh.write(np.array([len(ids)], dtype="<u4").tobytes())
                fh.write(ids.tobytes())

    @classmethod
    def load(cls, path) -> CoverageMatrix:
        data = open(path, "rb").read()
        if data[:8] != b"CVPLCOVM":
            raise ValueError("not a coverage matrix file")
        nc, nt = np.frombuffer(data, "<u4", 2, 8)
        vis = np.zeros((nc, nt), dtype=bool)
        pos = 16
        for c in range(nc):
            (k,) = np.frombuffer(data, "<u4", 1, pos)
            pos += 4
            vis[c, np.frombuffer(data, "<u4", k, pos)] = True
            pos += 4 * int(k)
        return cls(vis)


# ---------------------------------------------------------------------------
# scalar stage predicates (numba)


@nb.njit(cache=True, nogil=True)
def _frustum(cx, cy, cz, yaw, tx, ty, tz, half_h, half_v, rmin, rmax, omni):
    vx = tx - cx
    vy = ty - cy
    vz = tz - cz
    r = math.sqrt(vx * vx + vy * vy + vz * vz)
    if r < rmin or r > rmax:
        return False
    horiz = math.sqrt(vx * vx + vy * vy)
    if abs(math.atan2(vz, horiz)) > half_v:
        return False
    if not omni:
        b = math.atan2(vy, vx) - yaw
        b = (b + math.pi) % (2 * math.pi) - math.pi
        if abs(b) > half_h:
            return False
    return True


@nb.njit(cache=True, nogil=True)
def _backface(dist, origin, vs, trunc, c, t):
    """Per-component sign rule; True means the target may be visible."""
    v = trilinear(dist, origin, vs, t)
    if abs(v) >= trunc:
        return True
    g = central_gradient(dist, origin, vs, t)
    gn = math.sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2])
    strict = False
    for k in range(3):
        # h = -grad points into material; round-off sized components count as zero
        if abs(g[k]) <= _GRAD_EPS * gn:
            continue
        prod = (c[k] - t[k]) * (-g[k])
        if prod < 0:
            return True
        if prod > 0:
            strict = True
    return not strict


@nb.njit(cache=True, nogil=True)
def _inside_lattice(p, origin, vs, dims):
    for k in range(3):
        if p[k] < origin[k] + 0.5 * vs or p[k] > origin[k] + (dims[k] - 0.5) * vs:
            return False
    return True


@nb.njit(cache=True, nogil=True)
def _cell_free(occ, origin, vs, p):
    idx = np.empty(3, np.int64)
    for k in range(3):
        i = int(math.floor((p[k] - origin[k]) / vs))
        if i < 0 or i >= occ.shape[k]:
            return False
        idx[k] = i
    return not occ[idx[0], idx[1], idx[2]]


@nb.njit(cache=True, nogil=True)
def _occlusion_certificate(dist, s_origin, s_vs, occ, g_origin, g_vs, c, t, steps):
    margin = math.sqrt(3.0) * s_vs
    if not _inside_lattice(c, s_origin, s_vs, dist.shape):
        return False
    if trilinear(dist, s_origin, s_vs, c) <= margin or not _cell_free(occ, g_origin, g_vs, c):
        return False
    d = c - t
    length = math.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
    if length == 0.0:
        return False
    p = np.empty(3)
    for s in steps:
        r = s * g_vs
        if r >= length:
            break
        for k in range(3):
            p[k] = t[k] + d[k] * (r / length)
        if not _inside_lattice(p, s_origin, s_vs, dist.shape):
            continue
        if trilinear(dist, s_origin, s_vs, p) < -margin and _cell_free(occ, g_origin, g_vs, p):
            return True
    return False


@nb.njit(cache=True, nogil=True)
def _rewards_rows(row_lo, row_hi, cand, yaw, targets, half_h, half_v, rmin, rmax, omni, mount_yaw,
                  use_frustum, use_mask, mask_dirs, mask_blocked, fib,
                  use_sdf, dist, s_origin, s_vs, trunc, steps,
                  occ, g_origin, g_vs, stage):
    m = mask_dirs.shape[0]
    for ci in range(row_lo, row_hi):
        c = cand[ci]
        base_yaw = yaw[ci] - mount_yaw
        cb = math.cos(-base_yaw)
        sb = math.sin(-base_yaw)
        for ti in range(targets.shape[0]):
            t = targets[ti]
            if use_frustum and not _frustum(c[0], c[1], c[2], yaw[ci], t[0], t[1], t[2],
                                            half_h, half_v, rmin, rmax, omni):
                stage[ci, ti] = 1
                continue
            if use_mask:
                vx = t[0] - c[0]
                vy = t[1] - c[1]
                vz = t[2] - c[2]
                r = math.sqrt(vx * vx + vy * vy + vz * vz)
                if r > 0:
                    bx = (cb * vx - sb * vy) / r
                    by = (sb * vx + cb * vy) / r
                    k = nearest_fibonacci_index(bx, by, vz / r, m, mask_dirs, fib)
                    if mask_blocked[k]:
                        stage[ci, ti] = 2
                        continue
            if use_sdf and not _backface(dist, s_origin, s_vs, trunc, c, t):
                if _occlusion_certificate(dist, s_origin, s_vs, occ, g_origin, g_vs, c, t, steps):
                    stage[ci, ti] = 3
                    continue
            if not segment_clear(occ, g_origin, g_vs, c, t):
                stage[ci, ti] = 4
                continue
            stage[ci, ti] = 0


# ---------------------------------------------------------------------------
# public predicates


def in_frustum(candidate: CandidateViewpoint, target, sensor: SensorModel) -> bool:
    """Range, bearing and elevation test; all bounds inclusive."""
    c = np.asarray(candidate.position, float)
    t = np.asarray(target, float)
    return bool(_frustum(c[0], c[1], c[2], float(candidate.yaw), t[0], t[1], t[2],
                         math.radians(sensor.fov_h) / 2, math.radians(sensor.fov_v) / 2,
                         sensor.range_min, sensor.range_max, sensor.fov_h >= 360.0))


def sdf_backface_check(sdf: SignedDistanceField, candidate_pos, target) -> bool:
    """False (reject) when the candidate lies behind the surface at ``target``.

    Uses the component-wise rule: with ``h`` the SDF gradient negated (pointing
    into material) and ``d = candidate - target``, reject iff every product
    ``d_i * h_i`` is >= 0 and at least one is > 0. Targets whose |sdf| has hit
    the truncation skip the test.
    """
    return bool(_backface(sdf.distance, sdf.origin, sdf.voxel_size, sdf.truncation,
                          np.asarray(candidate_pos, float), np.asarray(target, float)))


def occlusion_certificate(sdf: SignedDistanceField, grid: VoxelOccupancyGrid, candidate_pos, target) -> bool:
    return bool(_occlusion_certificate(sdf.distance, sdf.origin, sdf.voxel_size, grid.occupied, grid.origin,
                                       grid.voxel_size, np.asarray(candidate_pos, float),
                                       np.asarray(target, float), _CERT_STEPS))


def compute_stage_matrix(
    positions,
    yaws,
    targets,
    sensor: SensorModel,
    mask: SelfOcclusionMask | None,
    sdf: SignedDistanceField | None,
    grid: VoxelOccupancyGrid,
    *,
    use_frustum: bool = True,
    use_mask: bool = True,
    use_sdf: bool = True,
    workers: int = 1,
) -> np.ndarray:
    """uint8 matrix of the rejecting stage per pair (0 = visible)."""
    cand = np.ascontiguousarray(np.asarray(positions, dtype=np.float64).reshape(-1, 3))
    yaw = np.ascontiguousarray(np.asarray(yaws, dtype=np.float64).reshape(-1))
    tgt = np.ascontiguousarray(np.asarray(targets, dtype=np.float64).reshape(-1, 3))
    for p in np.vstack([cand, tgt]) if len(cand) and len(tgt) else []:
        if not grid.contains(p):
            raise ValueError("candidate or target outside the occupancy grid")
    stage = np.zeros((len(cand), len(tgt)), dtype=np.uint8)
    if stage.size == 0:
        return stage

    use_mask = use_mask and mask is not None
    mask_dirs = mask.directions if use_mask else np.zeros((1, 3))
    mask_blocked = mask.blocked if use_mask else np.zeros(1, dtype=bool)
    use_sdf = use_sdf and sdf is not None
    if use_sdf:
        dist, s_origin, s_vs, trunc = sdf.distance, sdf.origin, sdf.voxel_size, sdf.truncation
    else:
        dist, s_origin, s_vs, trunc = np.zeros((2, 2, 2), np.float32), np.zeros(3), 1.0, 1.0
    args = (cand, yaw, tgt, math.radians(sensor.fov_h) / 2, math.radians(sensor.fov_v) / 2,
            sensor.range_min, sensor.range_max, sensor.fov_h >= 360.0, sensor.mount.yaw,
            use_frustum, use_mask, np.ascontiguousarray(mask_dirs), np.ascontiguousarray(mask_blocked), fib_table(),
            use_sdf, dist, s_origin, float(s_vs), float(trunc), _CERT_STEPS,
            grid.occupied, grid.origin, grid.voxel_size, stage)

    n = len(cand)
    workers = max(1, int(workers))
    if workers == 1 or n < 2:
        _rewards_rows(0, n, *args)
    else:
        bounds = np.linspace(0, n, min(n, 4 * workers) + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_rewards_rows, lo, hi, *args) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
            for f in futs:
                f.result()
    return stage


def compute_rewards(
    candidates,
    targets,
    sensor: SensorModel,
    mask: SelfOcclusionMask | None,
    sdf: SignedDistanceField | None,
    grid: VoxelOccupancyGrid,
    *,
    use_frustum: bool = True,
    use_mask: bool = True,
    use_sdf: bool = True,
    validate_sdf: int = 512,
    workers: int = 1,
) -> CoverageMatrix:
    """Visibility of every candidate/target pair, plus per-stage rejection counts.

    ``candidates`` is a list of CandidateViewpoint; ``targets`` a TargetPointSet
    or an (n, 3) array. The covered-id sets of the candidates are updated.

    The SDF stage is switched off with a warning when the SDF comes from a mesh
    that is not closed, and after the fact when any of the first
    ``validate_sdf`` SDF rejections turns out visible to the ray cast.
    """
    positions = np.array([c.position for c in candidates], dtype=np.float64).reshape(-1, 3)
    yaws = np.array([c.yaw for c in candidates], dtype=np.float64)
    tpts = targets.points if hasattr(targets, "points") else np.asarray(targets, dtype=np.float64)

    if use_sdf and sdf is not None and not getattr(sdf, "closed", True):
        log.warning("SDF stage disabled: the model mesh is not closed, wall signs are unreliable")
        use_sdf = False
    stage = compute_stage_matrix(positions, yaws, tpts, sensor, mask, sdf, grid, use_frustum=use_frustum,
                                 use_mask=use_mask, use_sdf=use_sdf, workers=workers)

    sdf_enabled = use_sdf and sdf is not None
    if sdf_enabled and validate_sdf > 0:
        rej = np.argwhere(stage == REJ_SDF)[:validate_sdf]
        for ci, ti in rej:
            if segment_clear(grid.occupied, grid.origin, grid.voxel_size, positions[ci], tpts[ti]):
                log.warning("SDF stage rejected a visible pair; disabling it for this run")
                sdf_enabled = False
                break
        if not sdf_enabled:
            for ci, ti in np.argwhere(stage == REJ_SDF):
                ok = segment_clear(grid.occupied, grid.origin, grid.voxel_size, positions[ci], tpts[ti])
                stage[ci, ti] = VISIBLE if ok else REJ_RAY

    visible = stage == VISIBLE
    counts = np.bincount(stage.ravel(), minlength=5)
    for c, row in zip(candidates, visible):
        c.covered_ids = frozenset(np.flatnonzero(row).tolist())
    return CoverageMatrix(visible, {name: int(counts[k + 1]) for k, name in enumerate(STAGES)}, sdf_enabled)
