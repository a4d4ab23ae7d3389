"""Execution simulator: 2D occupancy monitoring, footprint checks and local replanning."""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .mesh import TriangleMesh

FREE, OCCUPIED, UNKNOWN = 0, 1, 2
_DIRS = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)]


class ReplanError(RuntimeError):
    pass


class EventScriptError(ValueError):
    pass


def points_in_polygon(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Even-odd crossing test, vectorised over points."""
    pts = np.atleast_2d(pts)
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    px, py = poly[:, 0], poly[:, 1]
    qx, qy = np.roll(px, -1), np.roll(py, -1)
    for ax, ay, bx, by in zip(px, py, qx, qy):
        cond = (ay > y) != (by > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xc = ax + (y - ay) * (bx - ax) / (by - ay)
        inside ^= cond & (x < xc)
    return inside


@dataclass
class OccupancyGrid2D:
    origin: np.ndarray  # (2,) lower-left corner, m
    cell_size: float
    dims: tuple
    state: np.ndarray  # (nx, ny) uint8

    @classmethod
    def empty(cls, origin, cell_size: float, dims) -> OccupancyGrid2D:
        return cls(np.asarray(origin, float), float(cell_size), tuple(int(d) for d in dims),
                   np.zeros(tuple(int(d) for d in dims), dtype=np.uint8))

    @classmethod
    def from_mesh(cls, mesh: TriangleMesh, cell_size: float = 0.05, band=(0.1, 1.5), pad: float = 0.5) -> OccupancyGrid2D:
        """Project surfaces between ``band`` heights above the local ground to OCCUPIED.

        Local ground of a cell is the lowest upward-facing surface sampled in it;
        cells without one take the nearest cell's ground.
        """
        lo, hi = mesh.bounds()
        origin = lo[:2] - pad
        dims = tuple(int(d) for d in np.ceil((hi[:2] - lo[:2] + 2 * pad) / cell_size))
        corners = np.ascontiguousarray(mesh.corners())
        up = mesh.face_normals()[:, 2] > 0.7
        ground = np.full(dims, np.inf)
        _sample_ground(corners, up, origin, cell_size, ground)
        have = np.isfinite(ground)
        if have.any():
            from scipy.ndimage import distance_transform_edt

            _, idx = distance_transform_edt(~have, return_indices=True)
            ground = ground[idx[0], idx[1]]
        else:
            ground = np.full(dims, lo[2])
        state = np.zeros(dims, dtype=np.uint8)
        _mark_band(corners, origin, cell_size, ground, float(band[0]), float(band[1]), state)
        return cls(origin, float(cell_size), dims, state)

    def copy(self) -> OccupancyGrid2D:
        return OccupancyGrid2D(self.origin.copy(), self.cell_size, self.dims, self.state.copy())

    def centers(self, ii, jj) -> np.ndarray:
        return np.stack([self.origin[0] + (ii + 0.5) * self.cell_size, self.origin[1] + (jj + 0.5) * self.cell_size], -1)

    def cell_of(self, xy) -> tuple[int, int]:
        i, j = np.floor((np.asarray(xy, float)[:2] - self.origin) / self.cell_size).astype(int)
        return int(i), int(j)

    def cells_in_polygon(self, poly: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Indices of cells whose centres lie inside ``poly``; off-grid cells are returned too."""
        lo = np.floor((poly.min(0) - self.origin) / self.cell_size - 0.5).astype(int)
        hi = np.ceil((poly.max(0) - self.origin) / self.cell_size - 0.5).astype(int)
        ii, jj = np.meshgrid(np.arange(lo[0], hi[0] + 1), np.arange(lo[1], hi[1] + 1), indexing="ij")
        ii, jj = ii.ravel(), jj.ravel()
        m = points_in_polygon(self.centers(ii, jj), poly)
        return ii[m], jj[m]

    def occupied_at(self, ii, jj) -> np.ndarray:
        ii, jj = np.asarray(ii), np.asarray(jj)
        inside = (ii >= 0) & (jj >= 0) & (ii < self.dims[0]) & (jj < self.dims[1])
        out = np.ones(ii.shape, dtype=bool)  # off-grid counts as blocked
        out[inside] = self.state[ii[inside], jj[inside]] == OCCUPIED
        return out

    def mark_polygon(self, poly) -> int:
        ii, jj = self.cells_in_polygon(np.asarray(poly, float))
        ok = (ii >= 0) & (jj >= 0) & (ii < self.dims[0]) & (jj < self.dims[1])
        self.state[ii[ok], jj[ok]] = OCCUPIED
        return int(ok.sum())


@nb.njit(cache=True)
def _tri_samples(a, b, c, step):
    L = max(np.sqrt(((b - a) ** 2).sum()), np.sqrt(((c - a) ** 2).sum()), np.sqrt(((c - b) ** 2).sum()))
    return max(1, int(np.ceil(L / step)))


@nb.njit(cache=True)
def _sample_ground(corners, up, origin, cs, ground):
    for t in range(corners.shape[0]):
        if not up[t]:
            continue
        a, b, c = corners[t, 0], corners[t, 1], corners[t, 2]
        k = _tri_samples(a, b, c, cs / 2)
        for u in range(k + 1):
            for v in range(k + 1 - u):
                p = a + (b - a) * (u / k) + (c - a) * (v / k)
                i = int(np.floor((p[0] - origin[0]) / cs))
                j = int(np.floor((p[1] - origin[1]) / cs))
                if 0 <= i < ground.shape[0] and 0 <= j < ground.shape[1] and p[2] < ground[i, j]:
                    ground[i, j] = p[2]


@nb.njit(cache=True)
def _mark_band(corners, origin, cs, ground, lo, hi, state):
    for t in range(corners.shape[0]):
        a, b, c = corners[t, 0], corners[t, 1], corners[t, 2]
        k = _tri_samples(a, b, c, cs / 2)
        for u in range(k + 1):
            for v in range(k + 1 - u):
                p = a + (b - a) * (u / k) + (c - a) * (v / k)
                i = int(np.floor((p[0] - origin[0]) / cs))
                j = int(np.floor((p[1] - origin[1]) / cs))
                if 0 <= i < state.shape[0] and 0 <= j < state.shape[1]:
                    h = p[2] - ground[i, j]
                    if lo <= h <= hi:
                        state[i, j] = OCCUPIED


@dataclass(frozen=True)
class FootprintPolygon:
    vertices: np.ndarray  # (k, 2) convex, counter-clockwise, base frame

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 2)
        if len(v) < 3:
            raise ValueError("footprint needs at least 3 vertices")
        e = np.roll(v, -1, axis=0) - v
        cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
        if np.all(cross <= 0):
            v = v[::-1]
            e = np.roll(v, -1, axis=0) - v
            cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
        if np.any(cross < -1e-12):
            raise ValueError("footprint must be convex")
        # origin strictly inside: left of every edge
        if np.any(e[:, 0] * (0 - v[:, 1]) - e[:, 1] * (0 - v[:, 0]) <= 0):
            raise ValueError("footprint must contain the base origin")
        object.__setattr__(self, "vertices", v)

    @classmethod
    def rectangle(cls, length: float = 0.6, width: float = 0.4) -> FootprintPolygon:
        hl, hw = length / 2, width / 2
        return cls(np.array([[-hl, -hw], [hl, -hw], [hl, hw], [-hl, hw]]))

    @property
    def circumscribed_radius(self) -> float:
        return float(np.linalg.norm(self.vertices, axis=1).max())

    def at(self, x: float, y: float, yaw: float) -> np.ndarray:
        c, s = math.cos(yaw), math.sin(yaw)
        v = self.vertices
        return np.stack([x + c * v[:, 0] - s * v[:, 1], y + s * v[:, 0] + c * v[:, 1]], axis=1)

    def distance(self, pts: np.ndarray, x: float, y: float, yaw: float) -> np.ndarray:
        """Euclidean distance from points to the posed polygon (0 inside)."""
        poly = self.at(x, y, yaw)
        pts = np.atleast_2d(pts)
        d = np.full(len(pts), np.inf)
        for a, b in zip(poly, np.roll(poly, -1, axis=0)):
            ab = b - a
            t = np.clip(((pts - a) @ ab) / (ab @ ab), 0.0, 1.0)
            d = np.minimum(d, np.linalg.norm(pts - (a + t[:, None] * ab), axis=1))
        d[points_in_polygon(pts, poly)] = 0.0
        return d


def pose_blocked(grid: OccupancyGrid2D, footprint: FootprintPolygon, x: float, y: float, yaw: float) -> bool:
    ii, jj = grid.cells_in_polygon(footprint.at(x, y, yaw))
    return bool(grid.occupied_at(ii, jj).any())


# ---------------------------------------------------------------------------
# path helpers


def path_length(path) -> float:
    """Length of the polyline in all its dimensions (3D for xyz paths)."""
    p = np.asarray(path, dtype=np.float64)
    return float(np.linalg.norm(np.diff(p, axis=0), axis=1).sum()) if len(p) > 1 else 0.0


def horizontal_length(path) -> float:
    """Length in the xy plane; event and interval arc lengths use this measure."""
    return path_length(np.asarray(path, dtype=np.float64)[:, :2])


def _arclengths(p: np.ndarray) -> np.ndarray:
    return np.r_[0.0, np.cumsum(np.linalg.norm(np.diff(p, axis=0), axis=1))]


def _point_at(p: np.ndarray, s_cum: np.ndarray, s: float) -> tuple[np.ndarray, float]:
    """Position and heading at arc length s (heading of the outgoing segment)."""
    k = int(np.searchsorted(s_cum, s, side="right") - 1)
    k = min(max(k, 0), len(p) - 2)
    # skip zero-length segments for the heading
    kk = k
    while kk < len(p) - 2 and s_cum[kk + 1] - s_cum[kk] == 0:
        kk += 1
    while kk > 0 and s_cum[kk + 1] - s_cum[kk] == 0:
        kk -= 1
    seg = p[kk + 1] - p[kk]
    L = s_cum[k + 1] - s_cum[k]
    f = 0.0 if L == 0 else (s - s_cum[k]) / L
    return p[k] + f * (p[k + 1] - p[k]), math.atan2(seg[1], seg[0])


def sample_poses(path, step: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Poses every ``step`` of arc length, plus the final point. Returns (s, xy, yaw)."""
    p = np.asarray(path, dtype=np.float64)[:, :2]
    s_cum = _arclengths(p)
    total = s_cum[-1]
    n = int(math.floor(total / step + 1e-9))
    ss = np.r_[np.arange(n + 1) * step, total] if total - n * step > 1e-9 else np.arange(n + 1) * step
    xy = np.empty((len(ss), 2))
    yaw = np.empty(len(ss))
    for k, s in enumerate(ss):
        xy[k], yaw[k] = _point_at(p, s_cum, s) if len(p) > 1 else (p[0], 0.0)
    return ss, xy, yaw


@dataclass(frozen=True)
class BlockedInterval:
    """Blocked stretch of a path, bounded by the free poses next to it (arc lengths, m)."""

    s_start: float
    s_end: float
    blocked_from: float
    blocked_to: float


def validate_path(path, grid: OccupancyGrid2D, footprint: FootprintPolygon, step: float | None = None) -> list:
    """Blocked intervals of ``path``. Each interval runs between the free poses that bound a blocked run.

    A run touching the path start or end keeps that end as its bound.
    """
    step = grid.cell_size if step is None else step
    ss, xy, yaw = sample_poses(path, step)
    blocked = np.array([pose_blocked(grid, footprint, x, y, a) for (x, y), a in zip(xy, yaw)])
    out = []
    k = 0
    while k < len(ss):
        if not blocked[k]:
            k += 1
            continue
        j = k
        while j + 1 < len(ss) and blocked[j + 1]:
            j += 1
        out.append(BlockedInterval(float(ss[max(k - 1, 0)]), float(ss[min(j + 1, len(ss) - 1)]), float(ss[k]),
                                   float(ss[j])))
        k = j + 1
    return out


# ---------------------------------------------------------------------------
# replanning


def _clearance_maps(grid: OccupancyGrid2D, footprint: FootprintPolygon, offset: np.ndarray) -> np.ndarray:
    """blocked[d, i, j]: the move from lattice node (i, j) along direction d hits an obstacle.

    Lattice node (i, j) sits at the centre of cell (i, j) shifted by ``offset``.
    The exact footprint is posed at the move heading every cs/4 along the move,
    the same spacing used for connectors.
    """
    cs = grid.cell_size
    m = int(math.ceil((footprint.circumscribed_radius + 2 * cs) / cs)) + 1
    occ = np.pad(grid.state == OCCUPIED, m, constant_values=True)
    nx, ny = grid.dims
    di, dj = np.meshgrid(np.arange(-m, m + 1), np.arange(-m, m + 1), indexing="ij")
    di, dj = di.ravel(), dj.ravel()
    rel = np.stack([di * cs - offset[0], dj * cs - offset[1]], axis=1)
    out = np.zeros((8, nx, ny), dtype=bool)
    for d, (ux, uy) in enumerate(_DIRS):
        yaw = math.atan2(uy, ux)
        hit = np.zeros(len(rel), dtype=bool)
        n = int(math.ceil(math.hypot(ux, uy) * 4))
        for k in range(n + 1):
            hit |= points_in_polygon(rel, footprint.at(ux * cs * k / n, uy * cs * k / n, yaw))
        for a, b in zip(di[hit], dj[hit]):
            out[d] |= occ[m + a:m + a + nx, m + b:m + b + ny]
    return out


def _astar(grid, footprint, start_xy, goal_xy, goal_yaw_ok) -> list | None:
    cs = grid.cell_size
    i0, j0 = grid.cell_of(start_xy)
    offset = np.asarray(start_xy, float) - grid.centers(np.array(i0), np.array(j0))
    blocked = _clearance_maps(grid, footprint, offset)
    nx, ny = grid.dims
    goal = np.asarray(goal_xy, float)

    def node_xy(i, j):
        return grid.centers(np.array(i), np.array(j)) + offset

    def h(i, j):
        return float(np.linalg.norm(node_xy(i, j) - goal))

    if not (0 <= i0 < nx and 0 <= j0 < ny):
        return None
    start = (i0, j0)
    g = {start: 0.0}
    parent = {start: None}
    heap = [(h(*start), 0, start)]
    tick = 1
    GOAL = ("goal",)
    done = set()
    while heap:
        f, _, node = heapq.heappop(heap)
        if node == GOAL:
            break
        if node in done:
            continue
        done.add(node)
        i, j = node
        p = node_xy(i, j)
        dgoal = float(np.linalg.norm(p - goal))
        if dgoal <= 1.5 * cs and goal_yaw_ok(p):
            cand = g[node] + dgoal
            if cand < g.get(GOAL, np.inf):
                g[GOAL] = cand
                parent[GOAL] = node
                heapq.heappush(heap, (cand, tick, GOAL))
                tick += 1
        for d, (ux, uy) in enumerate(_DIRS):
            a, b = i + ux, j + uy
            if not (0 <= a < nx and 0 <= b < ny):
                continue
            if blocked[d, i, j]:
                continue
            ng = g[node] + cs * (math.sqrt(2) if ux and uy else 1.0)
            if ng < g.get((a, b), np.inf):
                g[(a, b)] = ng
                parent[(a, b)] = node
                heapq.heappush(heap, (ng + h(a, b), tick, (a, b)))
                tick += 1
    if GOAL not in parent:
        return None
    seq = []
    node = parent[GOAL]
    while node is not None:
        seq.append(node_xy(*node))
        node = parent[node]
    seq.reverse()
    seq[0] = np.asarray(start_xy, float)  # identical up to rounding; keep the exact anchor
    return seq


def _connector_free(grid, footprint, a, b) -> bool:
    d = b - a
    L = float(np.linalg.norm(d))
    if L == 0:
        return True
    yaw = math.atan2(d[1], d[0])
    n = max(1, int(math.ceil(L / (grid.cell_size / 4))))
    return not any(pose_blocked(grid, footprint, *(a + d * (k / n)), yaw) for k in range(n + 1))


def replan_blocked(path, blocked, grid: OccupancyGrid2D, footprint: FootprintPolygon) -> np.ndarray:
    """Replace every blocked interval by a grid detour; keep all other path points untouched.

    The detour runs on an 8-connected lattice anchored at the interval's start
    pose and ends with a short straight connector into the end pose.
    """
    p = np.array(path, dtype=np.float64)
    if not blocked:
        return p
    dim = p.shape[1]
    s_cum = _arclengths(p[:, :2])
    total = s_cum[-1]
    pieces = []
    cursor = 0  # index of the first original vertex not yet emitted
    for iv in sorted(blocked, key=lambda b: b.s_start):
        if iv.blocked_from <= 1e-12 or iv.blocked_to >= total - 1e-12:
            raise ReplanError(f"unreachable interval [{iv.s_start:.3f}, {iv.s_end:.3f}] m: path end is blocked")
        a_xy, _ = _point_at(p[:, :2], s_cum, iv.s_start)
        b_xy, _ = _point_at(p[:, :2], s_cum, iv.s_end)
        det = _astar(grid, footprint, a_xy, b_xy, lambda q, b_xy=b_xy: _connector_free(grid, footprint, q, b_xy))
        if det is None:
            raise ReplanError(f"unreachable interval [{iv.s_start:.3f}, {iv.s_end:.3f}] m: no detour exists")
        # original vertices strictly before the interval
        k_before = int(np.searchsorted(s_cum, iv.s_start, side="left"))
        k_after = int(np.searchsorted(s_cum, iv.s_end, side="right"))
        pieces.append(p[cursor:k_before])
        z_a = _interp_z(p, s_cum, iv.s_start, dim)
        z_b = _interp_z(p, s_cum, iv.s_end, dim)
        det = np.vstack(det + [b_xy])
        if dim == 3:
            det = np.c_[det, np.linspace(z_a, z_b, len(det))]
        # reuse exact original vertices when the interval starts or ends on one
        if k_before < len(p) and s_cum[k_before] == iv.s_start:
            det[0] = p[k_before]
        if k_after - 1 >= 0 and s_cum[k_after - 1] == iv.s_end:
            det[-1] = p[k_after - 1]
        pieces.append(det)
        cursor = k_after
    pieces.append(p[cursor:])
    out = np.vstack([x for x in pieces if len(x)])
    # drop consecutive duplicates introduced at the splice points
    keep = np.r_[True, np.any(np.diff(out, axis=0) != 0, axis=1)]
    return out[keep]


def _interp_z(p, s_cum, s, dim):
    if dim < 3:
        return 0.0
    return float(np.interp(s, s_cum, p[:, 2]))


# ---------------------------------------------------------------------------
# event loop


@dataclass
class ObstacleEvent:
    at_arclength_m: float
    polygon: np.ndarray


def parse_events(doc) -> list:
    """Parse ``{"events": [{"at_arclength_m": s, "polygon": [[x, y], ...]}, ...]}``."""
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise EventScriptError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("events"), list):
        raise EventScriptError("event script must be an object with an 'events' list")
    out = []
    for k, rec in enumerate(doc["events"]):
        where = f"events[{k}]"
        if not isinstance(rec, dict):
            raise EventScriptError(f"{where}: record must be an object")
        if "at_arclength_m" not in rec:
            raise EventScriptError(f"{where}: missing 'at_arclength_m'")
        if "polygon" not in rec:
            raise EventScriptError(f"{where}: missing 'polygon'")
        try:
            s = float(rec["at_arclength_m"])
            poly = np.asarray(rec["polygon"], dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise EventScriptError(f"{where}: {exc}") from exc
        if not np.isfinite(s) or s < 0:
            raise EventScriptError(f"{where}: at_arclength_m must be a finite value >= 0")
        if poly.ndim != 2 or poly.shape[1] != 2 or len(poly) < 3:
            raise EventScriptError(f"{where}: polygon needs at least 3 [x, y] points")
        if out and s < out[-1].at_arclength_m:
            raise EventScriptError(f"{where}: events must be sorted by at_arclength_m")
        out.append(ObstacleEvent(s, poly))
    return out


def load_events(path) -> list:
    with open(path) as fh:
        text = fh.read()
    return parse_events(text)


@dataclass
class ExecutionLog:
    events: list = field(default_factory=list)
    path: np.ndarray | None = None  # final driven polyline
    planned_length: float = 0.0

    @property
    def driven_length(self) -> float:
        return path_length(self.path)

    @property
    def replans(self) -> list:
        return [e for e in self.events if e["type"] == "segment_replanned"]

    @property
    def waypoints_reached(self) -> list:
        return [e["waypoint"] for e in self.events if e["type"] == "waypoint_reached"]

    def summary(self) -> dict:
        return {"planned_length_m": self.planned_length, "driven_length_m": self.driven_length,
                "replanned_segments": len(self.replans), "waypoints_reached": len(self.waypoints_reached)}

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for e in self.events:
                fh.write(json.dumps(e, sort_keys=True) + "\n")
            fh.write(json.dumps({"type": "summary", **self.summary(),
                                 "path": np.round(self.path, 6).tolist()}, sort_keys=True) + "\n")


def _waypoint_arclengths(p, marks) -> list:
    s_cum = _arclengths(p[:, :2])
    return [(int(w), float(s_cum[k])) for k, w in enumerate(marks) if w >= 0]


def simulate_execution(path, waypoint_marks, events, grid: OccupancyGrid2D, footprint: FootprintPolygon) -> ExecutionLog:
    """Drive ``path`` (polyline, xy or xyz) and react to obstacle events.

    ``waypoint_marks`` holds, per path vertex, the waypoint index it realises
    or -1. At each event the grid is updated, the whole remaining path is
    validated and blocked intervals are replanned. A capture is logged at every
    waypoint.
    """
    grid = grid.copy()
    p = np.array(path, dtype=np.float64)
    marks = np.array(waypoint_marks, dtype=np.int64)
    if len(marks) != len(p):
        raise ValueError("waypoint_marks must have one entry per path vertex")
    log = ExecutionLog(planned_length=path_length(p))
    pos = 0.0
    reached = set()

    def reach_until(s_lim):
        for w, s in _waypoint_arclengths(p, marks):
            if s <= s_lim + 1e-9 and w not in reached:
                reached.add(w)
                log.events.append({"type": "waypoint_reached", "waypoint": w, "arclength_m": round(s, 6)})
                log.events.append({"type": "sensor_capture", "waypoint": w})

    for ev in events:
        if ev.at_arclength_m < pos - 1e-9:
            raise ValueError("events must be sorted")
        pos = ev.at_arclength_m
        reach_until(pos)
        cells = grid.mark_polygon(ev.polygon)
        log.events.append({"type": "obstacle_detected", "arclength_m": pos, "cells": cells})
        ahead = [iv for iv in validate_path(p, grid, footprint) if iv.blocked_to >= pos]
        if any(iv.s_start < pos for iv in ahead):
            raise ReplanError(f"obstacle at {pos:.3f} m blocks the robot's current pose")
        for iv in sorted(ahead, key=lambda b: -b.s_start):  # back to front keeps arc lengths valid
            s_cum = _arclengths(p[:, :2])
            inside = (s_cum > iv.s_start) & (s_cum < iv.s_end)
            if np.any(marks[inside] >= 0):
                raise ReplanError(f"unreachable interval [{iv.s_start:.3f}, {iv.s_end:.3f}] m: a waypoint is blocked")
            old_len = iv.s_end - iv.s_start
            new_p = replan_blocked(p, [iv], grid, footprint)
            marks = _carry_marks(p, marks, new_p)
            seg_len = horizontal_length(new_p) - horizontal_length(p) + old_len
            p = new_p
            log.events.append({"type": "segment_replanned", "s_start": iv.s_start, "s_end": iv.s_end,
                               "old_len": round(old_len, 6), "new_len": round(seg_len, 6)})
    reach_until(np.inf)
    log.path = p
    return log


def _carry_marks(old: np.ndarray, old_marks: np.ndarray, new: np.ndarray) -> np.ndarray:
    """Map waypoint marks onto the spliced path by exact vertex identity, in order."""
    out = np.full(len(new), -1, dtype=np.int64)
    j = 0
    for k, row in enumerate(old):
        if old_marks[k] < 0:
            continue
        while j < len(new) and not np.array_equal(new[j], row):
            j += 1
        if j == len(new):
            raise ReplanError("waypoint lost during replanning")
        out[j] = old_marks[k]
    return out
