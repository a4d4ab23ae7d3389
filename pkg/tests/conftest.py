"""Shared scene builders for the test suite."""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from covplan.building import FLOOR, OUTSIDE, WALL, extrude_cells  # noqa: E402
from covplan.sdf import compute_sdf  # noqa: E402
from covplan.targets import sample_target_points  # noqa: E402
from covplan.voxel import voxelize  # noqa: E402


def enclosed(nx: int, ny: int) -> np.ndarray:
    """Floor of nx x ny cells with a one-cell perimeter wall."""
    kind = np.full((nx, ny), FLOOR, dtype=np.int64)
    kind[0, :] = kind[-1, :] = kind[:, 0] = kind[:, -1] = WALL
    return kind


def single_wall_layout(rng, nx: int = 14, ny: int = 14) -> np.ndarray:
    """Enclosed floor with one interior wall segment (random position, length and side)."""
    kind = enclosed(nx, ny)
    if rng.random() < 0.5:
        x = int(rng.integers(3, nx - 3))
        a = int(rng.integers(1, ny // 2))
        b = int(rng.integers(ny // 2, ny - 1))
        kind[x, a:b] = WALL
    else:
        y = int(rng.integers(3, ny - 3))
        a = int(rng.integers(1, nx // 2))
        b = int(rng.integers(nx // 2, nx - 1))
        kind[a:b, y] = WALL
    return kind


def two_room_layout(rng, nx: int = 14, ny: int = 10, door: bool | None = None) -> np.ndarray:
    """Two rooms split by a full wall, with a door unless ``door`` is False."""
    kind = enclosed(nx, ny)
    x = int(rng.integers(4, nx - 4))
    kind[x, :] = WALL
    if door is None:
        door = bool(rng.random() < 0.5)
    if door:
        y = int(rng.integers(1, ny - 4))
        kind[x, y:y + 3] = FLOOR
    return kind


@dataclass
class Scene:
    kind: np.ndarray
    model: object
    grid: object
    sdf: object
    targets: object

    @property
    def mesh(self):
        return self.model.mesh


def make_scene(kind, *, cell=0.25, wall_top=1.5, voxel=0.075, sdf_voxel=0.0375, density=40.0, seed=0,
               with_sdf=True) -> Scene:
    model = extrude_cells(kind, cell=cell, wall_top=wall_top)
    grid = voxelize(model.mesh, voxel)
    sdf = compute_sdf(model.mesh, sdf_voxel) if with_sdf else None
    targets = sample_target_points(model.mesh.submesh(model.target_mask()), density, seed)
    return Scene(np.asarray(kind), model, grid, sdf, targets)


def floor_points(kind, rng, count, cell=0.25, z=0.8, margin=0.06):
    """Random points above FLOOR cells at height z."""
    cells = np.argwhere(np.asarray(kind) == FLOOR)
    pick = cells[rng.integers(0, len(cells), size=count)]
    off = rng.uniform(margin, cell - margin, size=(count, 2))
    xy = pick * cell + off
    return np.c_[xy, np.full(count, z)]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


__all__ = ["FLOOR", "OUTSIDE", "WALL", "Scene", "enclosed", "floor_points", "make_scene", "single_wall_layout",
           "small_config", "two_room_building", "two_room_layout", "write_models"]


def two_room_building() -> np.ndarray:
    """6 x 4 m, split at x = 3 m by a wall with a 1.25 m door."""
    kind = enclosed(24, 16)
    kind[12, :] = WALL
    kind[12, 5:10] = FLOOR
    return kind


def write_models(kind, out: Path, wall_top: float = 1.5, target_cells=None) -> dict:
    """Write complete.obj and target.obj; ``target_cells`` restricts targets to floor cells (i, j) in it."""
    model = extrude_cells(kind, cell=0.25, wall_top=wall_top)
    mask = model.target_mask()
    if target_cells is not None:
        own = model.cell_of
        mask &= np.array([target_cells(int(i), int(j)) if i >= 0 else False for i, j in own])
    out.mkdir(parents=True, exist_ok=True)
    model.mesh.save_obj(out / "complete.obj")
    model.mesh.submesh(mask).save_obj(out / "target.obj")
    return {"complete": str(out / "complete.obj"), "target": str(out / "target.obj")}


def small_config(paths: dict, out: Path, **sections):
    from covplan.config import PipelineConfig

    data = {"models": paths, "robot": {"start": [1.5, 2.0, 0.0]}, "targets": {"density": 20.0},
            "candidates": {"count": 60}, "output_dir": str(out)}
    for k, v in sections.items():
        data.setdefault(k, {}).update(v)
    return PipelineConfig.from_dict(data)
