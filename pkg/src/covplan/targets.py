"""Area-weighted target point sampling on the target mesh."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mesh import MeshError, TriangleMesh

DEFAULT_DENSITY = 50.0  # points per m^2


@dataclass(frozen=True)
class TargetPointSet:
    points: np.ndarray  # (n, 3)
    source_triangle: np.ndarray  # (n,)
    normals: np.ndarray  # (n, 3) unit normal of the source triangle

    @property
    def ids(self) -> np.ndarray:
        return np.arange(len(self.points))

    def __len__(self) -> int:
        return len(self.points)


def sample_target_points(target: TriangleMesh, density: float = DEFAULT_DENSITY, seed: int = 0) -> TargetPointSet:
    """Draw ``ceil(density * area)`` points, triangle chosen with probability ~ area."""
    if not density > 0:
        raise ValueError("density must be positive")
    if target.n_triangles == 0:
        raise MeshError("empty target mesh")
    areas = target.areas()
    total = float(areas.sum())
    n = max(1, math.ceil(density * total - 1e-9))
    rng = np.random.default_rng(seed)
    tri = rng.choice(len(areas), size=n, p=areas / total)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    c = target.corners()[tri]
    pts = (1 - r1)[:, None] * c[:, 0] + (r1 * (1 - r2))[:, None] * c[:, 1] + (r1 * r2)[:, None] * c[:, 2]
    return TargetPointSet(pts, tri.astype(np.int64), target.face_normals()[tri])
