"""Synthetic buildings extruded from a 2D cell layout.

Each layout cell is OUTSIDE, FLOOR or WALL. The solid is the union of the
columns over all non-outside cells, from ``base`` up to the floor heightfield
(FLOOR) or to ``wall_top`` (WALL). The resulting surface is closed and
consistently oriented, which the SDF sign and the traversability graph rely
on: floor vertices along a wall base connect to the wall's upper edge and so
become lethal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .mesh import TriangleMesh

OUTSIDE, FLOOR, WALL = 0, 1, 2
# face tags, used to cut the target model out of the complete one
TAG_FLOOR, TAG_WALL_FACE, TAG_WALL_TOP, TAG_EXTERIOR, TAG_BOTTOM = 0, 1, 2, 3, 4


@dataclass
class CellModel:
    mesh: TriangleMesh
    tags: np.ndarray  # per triangle face tag
    cell_of: np.ndarray  # (n_tri, 2) floor cell a FLOOR or WALL_FACE triangle belongs to, else -1

    def target_mask(self) -> np.ndarray:
        return (self.tags == TAG_FLOOR) | (self.tags == TAG_WALL_FACE)


def extrude_cells(kind, heights=None, cell: float = 0.25, wall_top: float = 2.5, base: float = -0.25,
                  origin=(0.0, 0.0)) -> CellModel:
    """Mesh a cell layout. ``heights`` gives floor height per cell corner, shape (nx+1, ny+1)."""
    kind = np.asarray(kind, dtype=np.int64)
    nx, ny = kind.shape
    hf = np.zeros((nx + 1, ny + 1)) if heights is None else np.asarray(heights, dtype=np.float64)
    if hf.shape != (nx + 1, ny + 1):
        raise ValueError("heights must have shape (nx + 1, ny + 1)")
    if np.any(hf <= base) or np.any(hf >= wall_top):
        raise ValueError("floor heights must lie strictly between base and wall_top")
    ox, oy = origin

    verts: list = []
    index: dict = {}

    def vid(i, j, level):
        key = (i, j, level)
        if key not in index:
            z = {"F": hf[i, j], "T": wall_top, "B": base}[level]
            index[key] = len(verts)
            verts.append((ox + i * cell, oy + j * cell, z))
        return index[key]

    tris, tags, owners = [], [], []

    def quad(a, b, c, d, normal, tag, owner=(-1, -1)):
        # a-b-c-d around the quad; flip to face ``normal``
        pa, pb, pc = (np.array(verts[k]) for k in (a, b, c))
        if np.dot(np.cross(pb - pa, pc - pa), normal) < 0:
            a, b, c, d = a, d, c, b
        tris.extend([(a, b, c), (a, c, d)])
        tags.extend([tag, tag])
        owners.extend([owner, owner])

    up, down = np.array([0, 0, 1.0]), np.array([0, 0, -1.0])
    for i in range(nx):
        for j in range(ny):
            k = kind[i, j]
            if k == OUTSIDE:
                continue
            lvl = "F" if k == FLOOR else "T"
            quad(vid(i, j, lvl), vid(i + 1, j, lvl), vid(i + 1, j + 1, lvl), vid(i, j + 1, lvl), up,
                 TAG_FLOOR if k == FLOOR else TAG_WALL_TOP, (i, j) if k == FLOOR else (-1, -1))
            quad(vid(i, j, "B"), vid(i + 1, j, "B"), vid(i + 1, j + 1, "B"), vid(i, j + 1, "B"), down, TAG_BOTTOM)
            # side faces towards the four neighbours; corners p, q of the shared edge
            for di, dj, p, q in ((1, 0, (i + 1, j), (i + 1, j + 1)), (-1, 0, (i, j), (i, j + 1)),
                                 (0, 1, (i, j + 1), (i + 1, j + 1)), (0, -1, (i, j), (i + 1, j))):
                n = np.array([di, dj, 0.0])
                ni, nj = i + di, j + dj
                other = kind[ni, nj] if 0 <= ni < nx and 0 <= nj < ny else OUTSIDE
                if other == OUTSIDE:
                    # split at the floor height so neighbouring boundary faces stay conforming
                    quad(vid(*p, "B"), vid(*q, "B"), vid(*q, "F"), vid(*p, "F"), n, TAG_EXTERIOR)
                    if k == WALL:
                        quad(vid(*p, "F"), vid(*q, "F"), vid(*q, "T"), vid(*p, "T"), n, TAG_EXTERIOR)
                elif k == WALL and other == FLOOR:
                    quad(vid(*p, "F"), vid(*q, "F"), vid(*q, "T"), vid(*p, "T"), n, TAG_WALL_FACE, (ni, nj))
    mesh = TriangleMesh(np.array(verts), np.array(tris, dtype=np.int64))
    return CellModel(mesh, np.array(tags, dtype=np.int64), np.array(owners, dtype=np.int64).reshape(-1, 2))


@dataclass
class Room:
    name: str
    lo: tuple  # (x, y) interior bounds, m
    hi: tuple
    sealed: bool = False

    def contains(self, xy, tol: float = 1e-6) -> np.ndarray:
        xy = np.atleast_2d(xy)
        return np.all((xy >= np.asarray(self.lo) - tol) & (xy <= np.asarray(self.hi) + tol), axis=1)


@dataclass
class Building:
    model: CellModel
    rooms: list
    ramp_lo: tuple
    ramp_hi: tuple
    start: tuple
    cell: float
    meta: dict = field(default_factory=dict)

    @property
    def complete(self) -> TriangleMesh:
        return self.model.mesh

    @property
    def target(self) -> TriangleMesh:
        return self.model.mesh.submesh(self.model.target_mask())

    def target_rooms(self) -> list:
        """Room name per target triangle, in target-mesh order."""
        owners = self.model.cell_of[self.model.target_mask()]
        centers = (owners + 0.5) * self.cell
        names = np.array([r.name for r in self.rooms] + [""], dtype=object)
        out = np.full(len(owners), len(self.rooms))
        for k, r in enumerate(self.rooms):
            out[r.contains(centers) & (out == len(self.rooms))] = k
        return names[out].tolist()

    def room_of(self, points) -> list:
        xy = np.atleast_2d(np.asarray(points, dtype=np.float64))[:, :2]
        out = [""] * len(xy)
        for r in self.rooms:
            for k in np.flatnonzero(r.contains(xy, tol=0.5 * self.cell)):
                out[k] = out[k] or r.name
        return out

    def on_ramp(self, points) -> np.ndarray:
        xy = np.atleast_2d(np.asarray(points, dtype=np.float64))[:, :2]
        return np.all((xy >= self.ramp_lo) & (xy <= self.ramp_hi), axis=1)

    def metadata(self) -> dict:
        return {
            "rooms": [{"name": r.name, "lo": list(r.lo), "hi": list(r.hi), "sealed": r.sealed} for r in self.rooms],
            "ramp": {"lo": list(self.ramp_lo), "hi": list(self.ramp_hi)},
            "start": list(self.start),
            "cell": self.cell,
            **self.meta,
        }

    def write(self, out_dir) -> dict:
        from pathlib import Path

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.complete.save_obj(out / "complete.obj")
        self.target.save_obj(out / "target.obj")
        (out / "building.json").write_text(json.dumps(self.metadata(), indent=2) + "\n")
        return {"complete": str(out / "complete.obj"), "target": str(out / "target.obj"),
                "meta": str(out / "building.json")}


def generate_building(cell: float = 0.25, ramp_rise: float = 0.5, wall_top: float = 2.5) -> Building:
    """A 16 x 15 m floor: five rooms with interior walls and doors, a sealed room, and a ramp corridor.

    Rooms (interior, m): A [0,6]x[0,6] holds the start; B [6,16]x[0,6] has a
    free-standing partial wall; C [0,6]x[6,15]; S [6,10]x[6,15] has no door;
    the corridor R [10,13]x[6,11] is a ramp rising ``ramp_rise`` towards the
    upper room U [10,16]x[11,15], which is reachable only over the ramp.
    """
    s = 0.25 / cell
    if abs(s - round(s)) > 1e-9:
        raise ValueError("cell must divide 0.25 m")
    s = int(round(s))

    def c(x):  # metres -> cell index
        return int(round(x / cell))

    nx, ny = c(16.0), c(15.0)
    kind = np.full((nx, ny), FLOOR, dtype=np.int64)
    w = s  # wall thickness in cells (0.25 m)

    def wall(x0, y0, x1, y1):
        kind[c(x0):c(x1), c(y0):c(y1)] = WALL

    def door(x0, y0, x1, y1):
        kind[c(x0):c(x1), c(y0):c(y1)] = FLOOR

    t = w * cell
    wall(0, 0, 16, t)
    wall(0, 15 - t, 16, 15)
    wall(0, 0, t, 15)
    wall(16 - t, 0, 16, 15)
    wall(0, 6, 16, 6 + t)  # A|C, B|S, B|R, B|notch
    wall(6, 0, 6 + t, 15)  # A|B, C|S
    wall(10, 6, 10 + t, 15)  # S|R, S|U
    wall(10, 11, 16, 11 + t)  # R|U, notch|U
    wall(12.75, 6, 13, 11.25)  # R|notch
    wall(11, 0, 11 + t, 3.5)  # partial wall in B
    kind[c(13):, c(6.25):c(11)] = OUTSIDE  # notch east of the corridor
    door(2, 6, 3.25, 6 + t)  # A-C
    door(6, 2.5, 6 + t, 3.75)  # A-B
    door(11, 6, 12.25, 6 + t)  # B-R
    door(11, 11, 12.25, 11 + t)  # R-U

    xs = np.arange(nx + 1) * cell
    ys = np.arange(ny + 1) * cell
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    y0, y1 = 6.0 + t, 11.0
    ramp = np.clip((Y - y0) / (y1 - y0), 0.0, 1.0) * ramp_rise
    hf = np.where((X >= 10.0 + t - 1e-9) & (Y >= y0 - 1e-9), ramp, 0.0)

    model = extrude_cells(kind, hf, cell=cell, wall_top=wall_top)
    rooms = [
        Room("A", (t, t), (6, 6)),
        Room("B", (6 + t, t), (16 - t, 6)),
        Room("C", (t, 6 + t), (6, 15 - t)),
        Room("S", (6 + t, 6 + t), (10, 15 - t), sealed=True),
        Room("R", (10 + t, 6 + t), (12.75, 11)),
        Room("U", (10 + t, 11 + t), (16 - t, 15 - t)),
    ]
    return Building(model, rooms, (10 + t, y0), (12.75, y1), (3.0, 3.0, 0.0), cell,
                    {"ramp_rise": ramp_rise, "wall_top": wall_top})


def load_building_meta(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
