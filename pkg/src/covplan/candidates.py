"""Candidate sensor viewpoints: reachable traversable positions times a yaw fan."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .traversability import TraversabilityGraph


@dataclass(frozen=True)
class MountTransform:
    """Sensor frame relative to the robot base: translation (m) and yaw (rad)."""

    x: float = 0.0
    y: float = 0.0
    z: float = 0.8
    yaw: float = 0.0

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class SensorModel:
    fov_h: float = 360.0  # degrees
    fov_v: float = 180.0
    range_min: float = 0.3
    range_max: float = 15.0
    mount: MountTransform = field(default_factory=MountTransform)

    def __post_init__(self):
        if not 0 < self.fov_h <= 360:
            raise ValueError("fov_h must be in (0, 360]")
        if not 0 < self.fov_v <= 180:
            raise ValueError("fov_v must be in (0, 180]")
        if self.range_min < 0 or not self.range_max > self.range_min:
            raise ValueError("need 0 <= range_min < range_max")


@dataclass
class CandidateViewpoint:
    id: int
    graph_vertex: int
    position: np.ndarray
    yaw: float
    covered_ids: frozenset = frozenset()

    @property
    def reward(self) -> int:
        return len(self.covered_ids)


def reachable_vertices(graph: TraversabilityGraph, start: int, cost_threshold: float = 0.8) -> set[int]:
    """Breadth-first closure from ``start`` over vertices cheaper than the threshold."""
    ok = graph.traversable(cost_threshold)
    if not ok[start]:
        raise ValueError(f"start vertex {start} is lethal or above the cost threshold")
    adj = graph.adjacency
    seen = np.zeros(graph.n_nodes, dtype=bool)
    seen[start] = True
    queue = deque([start])
    while queue:
        v = queue.popleft()
        for u in adj.indices[adj.indptr[v]:adj.indptr[v + 1]]:
            if ok[u] and not seen[u]:
                seen[u] = True
                queue.append(u)
    return set(np.flatnonzero(seen).tolist())


def subsample_positions(reachable, count: int, seed: int = 0) -> list[int]:
    if count < 1:
        raise ValueError("count must be >= 1")
    pool = np.array(sorted(reachable), dtype=np.int64)
    if len(pool) == 0:
        raise ValueError("empty reachable set")
    if count >= len(pool):
        return pool.tolist()
    rng = np.random.default_rng(seed)
    pick = rng.choice(pool, size=count, replace=False)
    return sorted(pick.tolist())


def orientation_count(fov_h: float, n: int = 1) -> int:
    """Number of equally spaced yaws, ceil(n * 360 / fov_h)."""
    if not 0 < fov_h <= 360:
        raise ValueError("fov_h must be in (0, 360]")
    if n < 1:
        raise ValueError("overlap factor must be >= 1")
    # round first so that e.g. 3 * 360 / 120 does not ceil to 10 on float noise
    return math.ceil(round(n * 360.0 / fov_h, 9))


def generate_candidates(
    positions,
    graph: TraversabilityGraph,
    sensor: SensorModel,
    sensor_height: float | None = None,
    n: int = 1,
    yaw_offset: float = 0.0,
) -> list[CandidateViewpoint]:
    if len(positions) == 0:
        raise ValueError("no candidate positions")
    h = sensor.mount.z if sensor_height is None else sensor_height
    count = orientation_count(sensor.fov_h, n)
    yaws = [math.fmod(yaw_offset + k * 2 * math.pi / count, 2 * math.pi) % (2 * math.pi) for k in range(count)]
    out = []
    for v in positions:
        pos = graph.nodes[v] + np.array([0.0, 0.0, h])
        for yaw in yaws:
            out.append(CandidateViewpoint(len(out), int(v), pos.copy(), yaw))
    return out
