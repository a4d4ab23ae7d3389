"""End-to-end planning: ingest, candidates, rewards, selection, waypoints, tour."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import dijkstra

from .body import RobotBodyModel, build_self_mask, default_body
from .candidates import (MountTransform, SensorModel, generate_candidates, reachable_vertices,
                         subsample_positions)
from .config import PipelineConfig
from .mesh import load_mesh
from .routing import (anneal_tour, edge_weighted_graph, mst_initial_tour, pairwise_path_costs,
                      viewpoint_to_waypoint)
from .sdf import compute_sdf
from .selection import SOLVERS
from .targets import sample_target_points
from .traversability import build_traversability_graph
from .visibility import compute_rewards
from .voxel import voxelize

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"
STAGES = ("ingest", "candidates", "rewards", "selection", "waypoints", "tsp")


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class PipelineResult:
    plan: dict
    timing: dict
    counters: dict
    selection: object = None
    extras: dict = field(default_factory=dict)


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sensor_from_config(cfg: PipelineConfig) -> SensorModel:
    s = cfg.sensor
    return SensorModel(s.fov_h, s.fov_v, s.range_min, s.range_max, MountTransform(*s.mount))


def body_from_config(cfg: PipelineConfig) -> RobotBodyModel:
    mount = cfg.sensor.mount
    if not cfg.robot.body_boxes:
        body = default_body(mount[2])
        return RobotBodyModel(body.convex_parts, np.array(mount[:3], dtype=float))
    return RobotBodyModel.from_boxes(cfg.robot.body_boxes, mount[:3])


def _r(x, nd=9):
    return round(float(x), nd)


def run_pipeline(cfg: PipelineConfig, workers: int | None = None, write: bool = True) -> PipelineResult:
    """Run every planning stage in order and write plan.json plus the reports to ``cfg.output_dir``."""
    workers = workers or os.cpu_count() or 1
    timing = {}
    t_total = time.perf_counter()
    stage_name = [""]

    @contextmanager
    def stage(name):
        stage_name[0] = name
        t0 = time.perf_counter()
        try:
            yield
        except PipelineError:
            raise
        except Exception as exc:  # noqa: BLE001 -- every stage failure is reported with its stage
            raise PipelineError(name, f"{type(exc).__name__}: {exc}") from exc
        finally:
            timing[name] = timing.get(name, 0.0) + time.perf_counter() - t0

    sensor_cfg = None
    with stage("ingest"):
        complete = load_mesh(cfg.models.complete)
        target = load_mesh(cfg.models.target)
        lo, hi = complete.bounds()
        tlo, thi = target.bounds()
        bounds = (np.minimum(lo, tlo), np.maximum(hi, thi))
        grid = voxelize(complete, cfg.grid.voxel_size, bounds)
        trunc = cfg.grid.sdf_truncation or None
        sdf = compute_sdf(complete, cfg.grid.sdf_voxel_size, trunc, bounds) if cfg.visibility.use_sdf else None
        graph = build_traversability_graph(complete, cfg.robot.max_step, cfg.robot.inscribed_radius)
        targets = sample_target_points(target, cfg.targets.density, cfg.targets.seed)

    with stage("candidates"):
        sensor_cfg = sensor_from_config(cfg)
        ok = graph.traversable(cfg.robot.cost_threshold)
        if not ok.any():
            raise PipelineError("candidates", "no traversable vertex in the model")
        start = graph.nearest(np.asarray(cfg.robot.start, float), ok)
        reach = reachable_vertices(graph, start, cfg.robot.cost_threshold)
        positions = subsample_positions(reach, cfg.candidates.count, cfg.candidates.seed)
        cands = generate_candidates(positions, graph, sensor_cfg, None, cfg.candidates.overlap,
                                    cfg.candidates.yaw_offset)
        # candidates whose sensor would sit outside the occupancy grid cannot be scored
        cands = [c for c in cands if grid.contains(c.position)]
        for k, c in enumerate(cands):
            c.id = k
        mask = build_self_mask(body_from_config(cfg), cfg.visibility.mask_size)

    with stage("rewards"):
        cov = compute_rewards(cands, targets, sensor_cfg, mask, sdf, grid, use_sdf=cfg.visibility.use_sdf,
                              workers=workers)

    with stage("selection"):
        sel_cfg = cfg.selection
        if sel_cfg.solver == "probabilistic":
            sel = SOLVERS["probabilistic"](cov, sel_cfg.min_reward, sel_cfg.lam, sel_cfg.trials, sel_cfg.seed)
        else:
            sel = SOLVERS[sel_cfg.solver](cov, sel_cfg.min_reward)
        if not sel.selected:
            raise PipelineError("selection", "no viewpoint selected (no candidate exceeds min_reward)")

    with stage("waypoints"):
        chosen = [cands[c] for c in sel.selected]
        wps = [viewpoint_to_waypoint(v, sensor_cfg, graph, cfg.robot.cost_threshold) for v in chosen]
        # the tour starts at the waypoint closest (by path cost) to the start vertex
        adj = edge_weighted_graph(graph, cfg.robot.cost_threshold, cfg.routing.penalty_weight)
        d0 = dijkstra(adj, directed=False, indices=start)
        first = min(range(len(wps)), key=lambda k: (d0[wps[k].vertex], k))
        order0 = [first] + [k for k in range(len(wps)) if k != first]
        wps = [wps[k] for k in order0]
        chosen = [chosen[k] for k in order0]
        costs = pairwise_path_costs(graph, wps, cfg.robot.cost_threshold, cfg.routing.penalty_weight)

    with stage("tsp"):
        init = mst_initial_tour(costs, 0, cfg.routing.closed)
        r = cfg.routing
        tour = anneal_tour(init, costs, r.T0 or None, r.alpha, r.iters or None, r.seed)

    t_plan = time.perf_counter()
    legs = []
    total_len = 0.0
    for a, b in zip(tour.order[:-1], tour.order[1:]):
        verts = costs.path(a, b)
        poly = graph.nodes[verts]
        length = float(np.linalg.norm(np.diff(poly, axis=0), axis=1).sum()) if len(poly) > 1 else 0.0
        total_len += length
        legs.append({"from": int(a), "to": int(b), "vertices": [int(v) for v in verts],
                     "polyline": [[_r(x) for x in p] for p in poly], "length": _r(length),
                     "cost": _r(costs.costs[a, b])})
    if tour.closed and len(tour.order) > 1:
        a, b = tour.order[-1], tour.order[0]
        verts = costs.path(a, b)
        poly = graph.nodes[verts]
        length = float(np.linalg.norm(np.diff(poly, axis=0), axis=1).sum())
        total_len += length
        legs.append({"from": int(a), "to": int(b), "vertices": [int(v) for v in verts],
                     "polyline": [[_r(x) for x in p] for p in poly], "length": _r(length),
                     "cost": _r(costs.costs[a, b])})

    waypoints = []
    for rank, k in enumerate(tour.order):
        w, v = wps[k], chosen[k]
        waypoints.append({
            "order": rank,
            "index": int(k),
            "position": [_r(x) for x in w.position],
            "yaw": _r(w.yaw),
            "vertex": int(w.vertex),
            "source_viewpoint": int(v.id),
            "sensor_position": [_r(x) for x in v.position],
            "sensor_yaw": _r(v.yaw),
            "covered_target_ids": sorted(int(t) for t in v.covered_ids),
        })
    provenance = {"config_sha256": cfg.digest(), "complete_sha256": file_sha256(cfg.models.complete),
                  "target_sha256": file_sha256(cfg.models.target)}
    plan = {
        "schema_version": SCHEMA_VERSION,
        "waypoints": waypoints,
        "legs": legs,
        "tour": {"order": [int(k) for k in tour.order], "closed": tour.closed, "cost": _r(tour.total_cost),
                 "initial_cost": _r(init.total_cost)},
        "total_path_length": _r(total_len),
        "coverage_rate": _r(sel.coverage_rate),
        "n_targets": len(targets),
        "n_candidates": len(cands),
        "n_selected": len(sel.selected),
        "sdf_stage_enabled": bool(cov.sdf_enabled),
        "start_vertex": int(start),
        "provenance": provenance,
    }
    counters = {"stage_rejections": cov.stage_rejections, "pairs": int(cov.visible.size),
                "visible_pairs": int(cov.visible.sum()), "sdf_stage_enabled": bool(cov.sdf_enabled),
                "sdf_ambiguous_cells": int(sdf.ambiguous_cells) if sdf is not None else 0}
    result = PipelineResult(plan, {}, counters, sel, {"targets": targets, "candidates": cands, "coverage": cov,
                                                      "graph": graph, "costs": costs, "tour": tour,
                                                      "waypoints": wps})
    if write:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "plan.json").write_text(plan_json(plan))
        sel.write_trace(out / "reward_trace.csv")
        costs.write_csv(out / "cost_matrix.csv")
        (out / "stage_counters.json").write_text(json.dumps(counters, indent=2, sort_keys=True) + "\n")
        with open(out / "candidates.jsonl", "w") as fh:
            for c in cands:
                fh.write(json.dumps({"id": c.id, "vertex": c.graph_vertex, "position": [_r(x) for x in c.position],
                                     "yaw": _r(c.yaw)}) + "\n")
    timing["output"] = time.perf_counter() - t_plan
    total = time.perf_counter() - t_total
    timing["misc"] = max(0.0, total - sum(timing.values()))
    timing["total"] = total
    result.timing = timing
    if write:
        (Path(cfg.output_dir) / "timing.json").write_text(json.dumps(timing, indent=2) + "\n")
    return result


def plan_json(plan: dict) -> str:
    return json.dumps(plan, indent=1, sort_keys=True) + "\n"


def plan_polyline(plan: dict) -> tuple[np.ndarray, np.ndarray]:
    """Concatenated tour polyline and per-vertex waypoint marks (order index or -1)."""
    pts, marks = [], []
    legs = plan["legs"]
    if not legs:
        wp = plan["waypoints"][0]
        v = np.array(wp["position"], float)
        return v[None, :], np.array([0])
    for k, leg in enumerate(legs):
        poly = np.array(leg["polyline"], float)
        if k > 0:
            poly = poly[1:]
        m = np.full(len(poly), -1)
        if k == 0:
            m[0] = 0
        m[-1] = k + 1
        pts.append(poly)
        marks.append(m)
    p = np.vstack(pts)
    mk = np.concatenate(marks)
    if plan["tour"]["closed"]:
        mk[-1] = -1
    return p, mk


def coverage_by_room(plan: dict, targets, room_of) -> dict:
    """Helper for reports: covered fraction per room label."""
    covered = set()
    for w in plan["waypoints"]:
        covered.update(w["covered_target_ids"])
    rooms = room_of(targets.points)
    out = {}
    for name in sorted(set(rooms)):
        ids = [k for k, r in enumerate(rooms) if r == name]
        out[name] = sum(1 for k in ids if k in covered) / len(ids) if ids else math.nan
    return out
