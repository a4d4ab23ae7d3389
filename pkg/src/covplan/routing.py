"""Waypoints, shortest-path cost matrix and tour ordering (MST preorder, then 2-opt annealing)."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .candidates import CandidateViewpoint, SensorModel
from .traversability import TraversabilityGraph


class RoutingError(ValueError):
    pass


@dataclass(frozen=True)
class Waypoint:
    position: np.ndarray  # base frame origin in world coordinates (m)
    yaw: float
    source_viewpoint: int
    vertex: int = -1  # supporting graph vertex

    def to_sensor(self, sensor: SensorModel) -> tuple[np.ndarray, float]:
        """Sensor pose for this base pose."""
        m = sensor.mount
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        p = self.position + np.array([c * m.x - s * m.y, s * m.x + c * m.y, m.z])
        return p, self.yaw + m.yaw


def viewpoint_to_waypoint(viewpoint: CandidateViewpoint, sensor: SensorModel, graph: TraversabilityGraph | None = None,
                          cost_threshold: float = 0.8) -> Waypoint:
    """Base pose under the sensor pose (inverse mount transform).

    With a graph, the supporting vertex is the node nearest the base position
    and must be traversable.
    """
    m = sensor.mount
    yaw = viewpoint.yaw - m.yaw
    c, s = math.cos(yaw), math.sin(yaw)
    p = np.asarray(viewpoint.position, dtype=np.float64) - np.array([c * m.x - s * m.y, s * m.x + c * m.y, m.z])
    vertex = -1
    if graph is not None:
        vertex = graph.nearest(p)
        if not graph.traversable(cost_threshold)[vertex]:
            raise RoutingError(f"viewpoint {viewpoint.id}: base pose lies over non-traversable vertex {vertex}")
    return Waypoint(p, yaw, viewpoint.id, vertex)


@dataclass
class CostMatrix:
    costs: np.ndarray  # (n, n) symmetric, metres
    paths: dict = field(default_factory=dict)  # (i, j) with i < j -> vertex sequence from i to j
    vertices: np.ndarray | None = None  # supporting vertex per waypoint

    @property
    def n(self) -> int:
        return len(self.costs)

    def path(self, i: int, j: int) -> list:
        if i == j:
            return [int(self.vertices[i])] if self.vertices is not None else []
        return list(self.paths[(i, j)]) if i < j else list(reversed(self.paths[(j, i)]))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            for row in self.costs:
                w.writerow([f"{x:.9g}" for x in row])


def edge_weighted_graph(graph: TraversabilityGraph, cost_threshold: float = 0.8, penalty_weight: float = 1.0) -> csr_matrix:
    """Edge length times (1 + penalty_weight * mean endpoint cost), over traversable vertices only."""
    ok = graph.traversable(cost_threshold)
    e = graph.edges
    keep = ok[e[:, 0]] & ok[e[:, 1]]
    i, j = e[keep, 0], e[keep, 1]
    length = np.linalg.norm(graph.nodes[i] - graph.nodes[j], axis=1)
    w = length * (1.0 + penalty_weight * 0.5 * (graph.cost[i] + graph.cost[j]))
    # csgraph drops explicit zeros; duplicate vertices were merged at load so lengths are > 0
    n = graph.n_nodes
    return csr_matrix((np.r_[w, w], (np.r_[i, j], np.r_[j, i])), shape=(n, n))


def pairwise_path_costs(graph: TraversabilityGraph, waypoints, cost_threshold: float = 0.8,
                        penalty_weight: float = 1.0) -> CostMatrix:
    verts = np.array([w.vertex if isinstance(w, Waypoint) else int(w) for w in waypoints], dtype=np.int64)
    n = len(verts)
    ok = graph.traversable(cost_threshold)
    bad = [k for k, v in enumerate(verts) if v < 0 or not ok[v]]
    if bad:
        raise RoutingError(f"waypoints on non-traversable vertices: {bad}")
    adj = edge_weighted_graph(graph, cost_threshold, penalty_weight)
    uniq, inv = np.unique(verts, return_inverse=True)
    dist, pred = dijkstra(adj, directed=False, indices=uniq, return_predecessors=True)
    costs = np.zeros((n, n))
    paths = {}
    unreachable = []
    for a in range(n):
        for b in range(a + 1, n):
            d = dist[inv[a], verts[b]]
            if not np.isfinite(d):
                unreachable.append((a, b))
                continue
            costs[a, b] = costs[b, a] = d
            seq = [int(verts[b])]
            row = pred[inv[a]]
            while seq[-1] != verts[a]:
                seq.append(int(row[seq[-1]]))
            paths[(a, b)] = seq[::-1]
    if unreachable:
        raise RoutingError(f"no path between waypoint pairs {unreachable}")
    return CostMatrix(costs, paths, verts)


@dataclass
class Tour:
    order: list
    total_cost: float
    closed: bool = False


def tour_cost(order, costs: np.ndarray, closed: bool = False) -> float:
    o = np.asarray(order, dtype=np.int64)
    c = float(np.sum(costs[o[:-1], o[1:]])) if len(o) > 1 else 0.0
    if closed and len(o) > 1:
        c += float(costs[o[-1], o[0]])
    return c


def _as_array(costs) -> np.ndarray:
    return np.asarray(costs.costs if isinstance(costs, CostMatrix) else costs, dtype=np.float64)


def mst_weight(costs) -> float:
    _, parent = _prim(_as_array(costs), 0)
    c = _as_array(costs)
    return float(sum(c[v, p] for v, p in enumerate(parent) if p >= 0))


def _prim(c: np.ndarray, root: int):
    n = len(c)
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    parent = np.full(n, -1)
    best[root] = 0.0
    order = []
    for _ in range(n):
        cand = np.where(in_tree, np.inf, best)
        v = int(np.argmin(cand))  # argmin returns the lowest index on ties
        in_tree[v] = True
        order.append(v)
        upd = ~in_tree & (c[v] < best)
        best[upd] = c[v][upd]
        parent[upd] = v
    return order, parent


def mst_initial_tour(costs, start: int = 0, closed: bool = False) -> Tour:
    """Preorder walk of the minimum spanning tree rooted at ``start``.

    Children are visited nearest first (ties by index).
    """
    c = _as_array(costs)
    n = len(c)
    if n == 0:
        return Tour([], 0.0, closed)
    _, parent = _prim(c, start)
    children = {v: [] for v in range(n)}
    for v, p in enumerate(parent):
        if p >= 0:
            children[int(p)].append(v)
    order, stack = [], [start]
    while stack:
        v = stack.pop()
        order.append(v)
        kids = sorted(children[v], key=lambda u: (c[v, u], u))
        stack.extend(reversed(kids))
    return Tour(order, tour_cost(order, c, closed), closed)


@nb.njit(cache=True)
def _anneal_block(order, c, closed, T, alpha, epoch, step, ii, jj, uu, cur, best, best_cost):
    n = order.shape[0]
    for k in range(ii.shape[0]):
        i = ii[k]
        j = jj[k]
        if i > j:
            i, j = j, i
        a = order[i - 1]
        b = order[i]
        x = order[j]
        delta = c[a, x] - c[a, b]
        if j + 1 < n:
            y = order[j + 1]
            delta += c[b, y] - c[x, y]
        elif closed:
            y = order[0]
            delta += c[b, y] - c[x, y]
        if delta <= 0 or (T > 0 and uu[k] < math.exp(-delta / T)):
            lo = i
            hi = j
            while lo < hi:
                tmp = order[lo]
                order[lo] = order[hi]
                order[hi] = tmp
                lo += 1
                hi -= 1
            cur += delta
            if cur < best_cost - 1e-12:
                best_cost = cur
                best[:] = order
        step += 1
        if step % epoch == 0:
            T *= alpha
    return T, step, cur, best_cost


def anneal_tour(initial: Tour, costs, T0: float | None = None, alpha: float = 0.995, iters: int | None = None,
                seed: int = 0) -> Tour:
    """2-opt simulated annealing with the first waypoint fixed.

    Moves reverse a segment order[i..j] with 1 <= i < j. Acceptance follows
    the Metropolis rule; the temperature is multiplied by ``alpha`` once per
    epoch of n moves. The best tour seen is returned, so the result never
    costs more than ``initial``.
    """
    c = _as_array(costs)
    n = len(initial.order)
    if n < 3:
        return Tour(list(initial.order), tour_cost(initial.order, c, initial.closed), initial.closed)
    if sorted(initial.order) != list(range(n)):
        raise RoutingError("initial tour is not a permutation")
    start_cost = tour_cost(initial.order, c, initial.closed)
    T = start_cost / n if T0 is None else float(T0)
    iters = 20000 * n if iters is None else int(iters)
    order = np.array(initial.order, dtype=np.int64)
    best = order.copy()
    rng = np.random.default_rng(seed)
    cur = best_cost = start_cost
    step = 0
    block = 1 << 18
    done = 0
    while done < iters:
        m = min(block, iters - done)
        ii = rng.integers(1, n, size=m)
        jj = rng.integers(1, n - 1, size=m)
        jj = jj + (jj >= ii)  # j uniform over [1, n-1] without i
        uu = rng.random(m)
        T, step, cur, best_cost = _anneal_block(order, c, initial.closed, T, alpha, n, step, ii, jj, uu, cur, best,
                                                best_cost)
        done += m
    out = best.tolist()
    return Tour(out, tour_cost(out, c, initial.closed), initial.closed)
