"""Independent reference implementations used as test oracles.

Each one is deliberately brute force and shares no code path with the
package routine it checks.
"""

from __future__ import annotations

import heapq
import itertools
import math

import numpy as np
from scipy.optimize import linprog


def segment_cells_bruteforce(occ_shape, origin, vs, p0, p1):
    """Cells crossed by a segment, ordered along it.

    Candidates come from dense samples every vs/4 plus their 26-neighbourhood;
    each candidate is then slab-tested exactly against the segment.
    """
    p0 = np.asarray(p0, float)
    p1 = np.asarray(p1, float)
    d = p1 - p0
    length = np.linalg.norm(d)
    n = max(2, int(math.ceil(length / (vs / 4))) + 1)
    ts = np.linspace(0.0, 1.0, n)
    samples = p0 + ts[:, None] * d
    base = np.floor((samples - origin) / vs).astype(int)
    offs = np.array(list(itertools.product((-1, 0, 1), repeat=3)))
    dims = np.asarray(occ_shape)
    cand = (base[:, None, :] + offs[None]).reshape(-1, 3)
    cand = cand[np.all((cand >= 0) & (cand < dims), axis=1)]
    cand = np.unravel_index(np.unique(np.ravel_multi_index(cand.T, dims)), dims)
    cand = np.stack(cand, axis=1)
    lo = origin + cand * vs
    hi = lo + vs
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - p0) / d
        t2 = (hi - p0) / d
    tmin = np.where(d == 0, np.where((p0 >= lo) & (p0 <= hi), -np.inf, np.inf), np.minimum(t1, t2))
    tmax = np.where(d == 0, np.where((p0 >= lo) & (p0 <= hi), np.inf, -np.inf), np.maximum(t1, t2))
    enter = np.maximum(tmin.max(axis=1), 0.0)
    leave = np.minimum(tmax.min(axis=1), 1.0)
    hit = enter < leave
    cells = cand[hit]
    order = np.lexsort((leave[hit], enter[hit]))
    return [tuple(c) for c in cells[order]]


def ray_clear_oracle(occ, origin, vs, p0, p1) -> bool:
    """Same visibility rule as the voxel walk, evaluated on the brute-force cell list."""
    dims = np.asarray(occ.shape)
    start = tuple(np.clip(np.floor((np.asarray(p0) - origin) / vs).astype(int), 0, dims - 1))
    end = tuple(np.clip(np.floor((np.asarray(p1) - origin) / vs).astype(int), 0, dims - 1))
    seq = [c for c in segment_cells_bruteforce(occ.shape, origin, vs, p0, p1) if c != start and c != end]
    states = [bool(occ[c]) for c in seq] + [bool(occ[end])] if end != start else []
    seen_occupied = False
    for s in states:
        if s:
            seen_occupied = True
        elif seen_occupied:
            return False
    return True


def dijkstra_pair(n, edges, weights, src, dst):
    """Plain heap Dijkstra between two vertices; returns (length, path)."""
    adj = [[] for _ in range(n)]
    for (a, b), w in zip(edges, weights):
        adj[a].append((b, w))
        adj[b].append((a, w))
    dist = {src: 0.0}
    prev = {}
    heap = [(0.0, src)]
    done = set()
    while heap:
        d, v = heapq.heappop(heap)
        if v in done:
            continue
        done.add(v)
        if v == dst:
            break
        for u, w in adj[v]:
            nd = d + w
            if nd < dist.get(u, math.inf):
                dist[u] = nd
                prev[u] = v
                heapq.heappush(heap, (nd, u))
    if dst not in dist:
        return math.inf, []
    path = [dst]
    while path[-1] != src:
        path.append(prev[path[-1]])
    return dist[dst], path[::-1]


def exhaustive_set_cover(rows: list[set], universe: set) -> int:
    """Size of the smallest sub-family covering ``universe`` (bitmask search)."""
    if not universe:
        return 0
    idx = {t: k for k, t in enumerate(sorted(universe))}
    masks = [sum(1 << idx[t] for t in r if t in idx) for r in rows]
    full = (1 << len(idx)) - 1
    for size in range(1, len(rows) + 1):
        for combo in itertools.combinations(masks, size):
            acc = 0
            for m in combo:
                acc |= m
            if acc == full:
                return size
    raise ValueError("universe not coverable")


def exhaustive_open_tour(costs: np.ndarray, start: int = 0) -> float:
    n = len(costs)
    rest = [i for i in range(n) if i != start]
    best = math.inf
    for perm in itertools.permutations(rest):
        c = costs[start, perm[0]] + sum(costs[perm[k], perm[k + 1]] for k in range(len(perm) - 1))
        best = min(best, c)
    return best


def monte_carlo_blocked_fraction(body, samples: int, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(samples, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return float(body.ray_hits_many(body.sensor_origin, d).mean())


def triangle_box_lp(tri: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> tuple[bool, float]:
    """Does the triangle meet the box? Solved as an LP over barycentric weights.

    Maximizes a slack s with lo + s <= x <= hi - s, so the sign of the optimum
    tells overlap and its size tells how far the instance is from touching.
    """
    # variables: w0, w1, w2, s ; maximize s
    A, b = [], []
    for k in range(3):
        row = list(tri[:, k])
        A.append([-x for x in row] + [1.0])  # -x + s <= -lo
        b.append(-lo[k])
        A.append(row + [1.0])  # x + s <= hi
        b.append(hi[k])
    res = linprog([0, 0, 0, -1.0], A_ub=A, b_ub=b, A_eq=[[1, 1, 1, 0]], b_eq=[1],
                  bounds=[(0, None)] * 3 + [(None, None)], method="highs")
    s = -res.fun
    return s >= 0, s


def _inside_convex(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Points inside or on a counter-clockwise convex polygon (half-plane test)."""
    ok = np.ones(len(pts), dtype=bool)
    for a, b in zip(poly, np.roll(poly, -1, axis=0)):
        ok &= (b[0] - a[0]) * (pts[:, 1] - a[1]) - (b[1] - a[1]) * (pts[:, 0] - a[0]) >= 0
    return ok


def _posed(fp: np.ndarray, x: float, y: float, yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.stack([x + c * fp[:, 0] - s * fp[:, 1], y + s * fp[:, 0] + c * fp[:, 1]], axis=1)


def grid_detour_oracle(obstacles: np.ndarray, cs: float, footprint: np.ndarray, start, goal,
                       bounds, max_nodes: int = 400_000) -> float:
    """Shortest 8-connected lattice detour from ``start`` to ``goal`` (plain Dijkstra).

    The lattice has spacing ``cs`` and passes through ``start``. A move is
    allowed when no obstacle point lies inside the footprint at the move
    heading, posed every cs/4 along it. The goal is entered the same way by a
    straight segment from any node within 1.5 cells.
    ``obstacles`` holds occupied cell centres; ``bounds`` is ((xmin, ymin), (xmax, ymax)).
    """
    start = np.asarray(start, float)
    goal = np.asarray(goal, float)
    lo, hi = np.asarray(bounds[0], float), np.asarray(bounds[1], float)
    reach = float(np.linalg.norm(footprint, axis=1).max()) + cs

    def free(x, y, yaw):
        near = obstacles[np.abs(obstacles[:, 0] - x) <= reach]
        near = near[np.abs(near[:, 1] - y) <= reach]
        return not len(near) or not _inside_convex(near, _posed(footprint, x, y, yaw)).any()

    def segment_free(a, b, step):
        d = b - a
        L = float(np.linalg.norm(d))
        if L == 0:
            return True
        yaw = math.atan2(d[1], d[0])
        n = max(1, int(math.ceil(L / step)))
        return all(free(*(a + d * (k / n)), yaw) for k in range(n + 1))

    dirs = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)]
    dist = {(0, 0): 0.0}
    heap = [(0.0, (0, 0))]
    best = math.inf
    done = set()
    while heap and len(done) < max_nodes:
        d, node = heapq.heappop(heap)
        if d >= best:
            break
        if node in done:
            continue
        done.add(node)
        p = start + cs * np.array(node, float)
        dg = float(np.linalg.norm(p - goal))
        if dg <= 1.5 * cs and segment_free(p, goal, cs / 4):
            best = min(best, d + dg)
        for ux, uy in dirs:
            q = start + cs * np.array((node[0] + ux, node[1] + uy), float)
            if np.any(q < lo) or np.any(q > hi):
                continue
            if not segment_free(p, q, cs / 4):
                continue
            nd = d + cs * math.hypot(ux, uy)
            key = (node[0] + ux, node[1] + uy)
            if nd < dist.get(key, math.inf):
                dist[key] = nd
                heapq.heappush(heap, (nd, key))
    return best
