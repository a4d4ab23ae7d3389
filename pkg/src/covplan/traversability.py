"""Mesh-vertex traversability graph with height-difference and inflation layers."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from .mesh import TriangleMesh

LETHAL = np.inf


@dataclass(frozen=True)
class TraversabilityGraph:
    nodes: np.ndarray  # (n, 3) vertex positions
    edges: np.ndarray  # (e, 2) undirected, i < j
    cost: np.ndarray  # (n,) in [0, 1] or LETHAL
    layers: dict = field(default_factory=dict)
    _adj: csr_matrix = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self._adj is None:
            n = len(self.nodes)
            i, j = self.edges[:, 0], self.edges[:, 1]
            w = np.linalg.norm(self.nodes[i] - self.nodes[j], axis=1)
            adj = csr_matrix((np.r_[w, w], (np.r_[i, j], np.r_[j, i])), shape=(n, n))
            object.__setattr__(self, "_adj", adj)
        for arr in (self.nodes, self.edges, self.cost):
            arr.flags.writeable = False

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def adjacency(self) -> csr_matrix:
        """Symmetric sparse matrix of Euclidean edge lengths."""
        return self._adj

    def neighbors(self, v: int) -> np.ndarray:
        a = self._adj
        return a.indices[a.indptr[v]:a.indptr[v + 1]]

    def is_lethal(self, v) -> np.ndarray:
        return np.isinf(self.cost[v])

    def traversable(self, cost_threshold: float) -> np.ndarray:
        """Boolean mask of vertices a robot may stand on."""
        return (self.cost < cost_threshold) & ~np.isinf(self.cost)

    @cached_property
    def _tree(self) -> cKDTree:
        return cKDTree(self.nodes)

    def nearest(self, point, mask: np.ndarray | None = None) -> int:
        """Index of the node closest to ``point``, optionally among ``mask`` only."""
        p = np.asarray(point, dtype=float)
        if mask is None:
            return int(self._tree.query(p)[1])
        idx = np.flatnonzero(mask)
        if len(idx) == 0:
            raise ValueError("no node satisfies the mask")
        return int(idx[np.argmin(np.linalg.norm(self.nodes[idx] - p, axis=1))])


def mesh_edges(mesh: TriangleMesh) -> np.ndarray:
    t = mesh.triangles
    e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    e = np.sort(e, axis=1)
    return np.unique(e, axis=0)


def build_traversability_graph(
    mesh: TriangleMesh, max_step: float = 0.3, inscribed_radius: float = 0.3
) -> TraversabilityGraph:
    """Graph over mesh vertices with two cost layers.

    ``height_diff`` is the largest height change to a 1-ring neighbour divided
    by ``max_step`` and capped at 1; vertices at 1 are lethal. ``inflation``
    marks everything within ``inscribed_radius`` (geodesic, along mesh edges)
    of a lethal vertex as lethal and tapers linearly from 1 to 0 between one
    and two radii. The node cost is the larger of the two layers.
    """
    if not max_step > 0:
        raise ValueError("max_step must be positive")
    nodes = mesh.vertices.copy()
    n = len(nodes)
    edges = mesh_edges(mesh)
    i, j = edges[:, 0], edges[:, 1]

    dz = np.abs(nodes[i, 2] - nodes[j, 2])
    max_dz = np.zeros(n)
    np.maximum.at(max_dz, i, dz)
    np.maximum.at(max_dz, j, dz)
    height = np.minimum(1.0, max_dz / max_step)
    degree = np.bincount(edges.ravel(), minlength=n)
    height[degree == 0] = 1.0

    w = np.linalg.norm(nodes[i] - nodes[j], axis=1)
    adj = csr_matrix((np.r_[w, w], (np.r_[i, j], np.r_[j, i])), shape=(n, n))

    lethal = height >= 1.0
    inflation = np.zeros(n)
    if lethal.any() and inscribed_radius > 0:
        dist = dijkstra(adj, directed=False, indices=np.flatnonzero(lethal), min_only=True,
                        limit=2 * inscribed_radius + 1e-9)
        inflation = np.clip((2 * inscribed_radius - dist) / inscribed_radius, 0.0, 1.0)
        inflation[dist <= inscribed_radius] = LETHAL
    inflation[lethal] = LETHAL

    cost = np.maximum(height, inflation)
    cost[cost >= 1.0] = LETHAL
    return TraversabilityGraph(
        nodes, edges, cost, {"height_diff": height, "inflation": inflation}, _adj=adj
    )
