"""Robot self-occlusion: convex body parts and the precomputed direction mask."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .fibonacci import fib_table, fibonacci_sphere, nearest_fibonacci_index, nearest_indices

DEFAULT_MASK_SIZE = 1024


class BodyModelError(ValueError):
    pass


def _halfspaces(vertices: np.ndarray) -> np.ndarray:
    v = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    if len(v) < 4:
        raise BodyModelError("a convex part needs at least 4 vertices")
    try:
        hull = ConvexHull(v)
    except QhullError as exc:
        raise BodyModelError("convex part vertices are coplanar or degenerate") from exc
    return hull.equations  # rows (nx, ny, nz, c): n.x + c <= 0 inside


@dataclass(frozen=True)
class RobotBodyModel:
    """Convex hulls in the base frame plus the sensor origin (base frame, m)."""

    convex_parts: tuple = ()
    sensor_origin: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.8]))

    def __post_init__(self):
        parts = tuple(np.asarray(p, dtype=np.float64).reshape(-1, 3) for p in self.convex_parts)
        object.__setattr__(self, "convex_parts", parts)
        object.__setattr__(self, "sensor_origin", np.asarray(self.sensor_origin, dtype=np.float64))
        object.__setattr__(self, "_planes", tuple(_halfspaces(p) for p in parts))

    @classmethod
    def from_boxes(cls, boxes, sensor_origin) -> RobotBodyModel:
        """Build from axis-aligned boxes given as (min_xyz, max_xyz) pairs."""
        parts = []
        for lo, hi in boxes:
            lo, hi = np.asarray(lo, float), np.asarray(hi, float)
            parts.append(np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])]))
        return cls(tuple(parts), np.asarray(sensor_origin, float))

    def contains(self, point) -> bool:
        p = np.asarray(point, dtype=np.float64)
        return any(np.all(pl[:, :3] @ p + pl[:, 3] < 0) for pl in self._planes)

    def ray_hits(self, origin, direction) -> bool:
        """True if the ray origin + t * direction (t >= 0) meets any convex part."""
        o = np.asarray(origin, dtype=np.float64)
        d = np.asarray(direction, dtype=np.float64)
        for pl in self._planes:
            if _ray_hits_hull(pl, o, d[None, :])[0]:
                return True
        return False

    def ray_hits_many(self, origin, directions) -> np.ndarray:
        o = np.asarray(origin, dtype=np.float64)
        d = np.atleast_2d(np.asarray(directions, dtype=np.float64))
        hit = np.zeros(len(d), dtype=bool)
        for pl in self._planes:
            hit |= _ray_hits_hull(pl, o, d)
        return hit


def _ray_hits_hull(planes: np.ndarray, o: np.ndarray, d: np.ndarray) -> np.ndarray:
    # Cyrus-Beck clipping of the rays against every face plane
    n, c = planes[:, :3], planes[:, 3]
    num = -(n @ o + c)  # (f,)
    den = d @ n.T  # (r, f)
    t_in = np.zeros(len(d))
    t_out = np.full(len(d), np.inf)
    miss = np.zeros(len(d), dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = num[None, :] / den
    entering = den < 0
    leaving = den > 0
    parallel = ~(entering | leaving)
    miss |= np.any(parallel & (num[None, :] < 0), axis=1)
    t_in = np.maximum(t_in, np.max(np.where(entering, t, -np.inf), axis=1))
    t_out = np.minimum(t_out, np.min(np.where(leaving, t, np.inf), axis=1))
    return ~miss & (t_in <= t_out)


@dataclass(frozen=True)
class SelfOcclusionMask:
    directions: np.ndarray  # (M, 3), base-frame axes centred on the sensor
    blocked: np.ndarray  # (M,) bool

    @property
    def M(self) -> int:
        return len(self.directions)


def build_self_mask(body: RobotBodyModel, M: int = DEFAULT_MASK_SIZE) -> SelfOcclusionMask:
    """Cast one ray per Fibonacci direction from the sensor origin against the body."""
    if M < 64:
        raise ValueError("mask size must be >= 64")
    if body.contains(body.sensor_origin):
        raise BodyModelError("sensor origin lies inside the robot body")
    dirs = fibonacci_sphere(M)
    blocked = body.ray_hits_many(body.sensor_origin, dirs) if body.convex_parts else np.zeros(M, bool)
    dirs.flags.writeable = False
    blocked.flags.writeable = False
    return SelfOcclusionMask(dirs, blocked)


def mask_lookup(mask: SelfOcclusionMask, direction) -> bool:
    """Blocked flag of the mask direction nearest to ``direction`` (O(1))."""
    d = np.asarray(direction, dtype=np.float64)
    norm = float(np.linalg.norm(d))
    if norm == 0.0:
        raise ValueError("zero-length direction")
    d = d / norm
    i = nearest_fibonacci_index(d[0], d[1], d[2], mask.M, mask.directions, fib_table())
    return bool(mask.blocked[i])


def mask_lookup_many(mask: SelfOcclusionMask, directions) -> np.ndarray:
    d = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    norms = np.linalg.norm(d, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("zero-length direction")
    return mask.blocked[nearest_indices(d / norms, mask.directions)]


def default_body(sensor_height: float = 0.8) -> RobotBodyModel:
    """A 0.6 x 0.4 m chassis with a slim mast below the sensor."""
    return RobotBodyModel.from_boxes(
        [((-0.3, -0.2, 0.05), (0.3, 0.2, 0.45)), ((-0.03, -0.03, 0.45), (0.03, 0.03, sensor_height - 0.08))],
        (0.0, 0.0, sensor_height),
    )
