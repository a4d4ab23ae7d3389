"""Acceptance criteria 1-10. Each test prints one PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the building runs
take a few minutes on one core.
"""

import hashlib
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.ndimage import distance_transform_edt

from covplan.body import build_self_mask, default_body, mask_lookup_many
from covplan.building import generate_building
from covplan.candidates import CandidateViewpoint, MountTransform, SensorModel, orientation_count
from covplan.cli import main
from covplan.config import PipelineConfig
from covplan.execsim import FootprintPolygon, OccupancyGrid2D, ObstacleEvent, simulate_execution
from covplan.fibonacci import fibonacci_sphere
from covplan.pipeline import plan_polyline, run_pipeline
from covplan.routing import anneal_tour, mst_initial_tour, mst_weight
from covplan.selection import greedy_bound, select_backtracking, select_greedy
from covplan.visibility import compute_rewards

from conftest import floor_points, make_scene, single_wall_layout, two_room_layout
from oracles import exhaustive_open_tour, exhaustive_set_cover, grid_detour_oracle, ray_clear_oracle


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}")
        assert ok, detail
    return emit


def random_scene(k):
    rng = np.random.default_rng(100 + k)
    kind = single_wall_layout(rng) if k % 2 == 0 else two_room_layout(rng)
    return kind, rng, make_scene(kind, seed=k)


def oracle_frustum(c, yaw, t, s: SensorModel):
    d = t - c
    r = float(np.linalg.norm(d))
    if not s.range_min <= r <= s.range_max:
        return False
    bearing = (math.atan2(d[1], d[0]) - yaw + math.pi) % (2 * math.pi) - math.pi
    elev = math.atan2(d[2], math.hypot(d[0], d[1]))
    return abs(bearing) <= math.radians(s.fov_h) / 2 and abs(elev) <= math.radians(s.fov_v) / 2


# ---------------------------------------------------------------- 1


def test_c1_visibility_oracle_equivalence(report):
    s = SensorModel(fov_h=120, fov_v=120, range_min=0.3, range_max=4.0)
    elapsed, pairs, mismatches, sdf_rej = 0.0, 0, 0, 0
    for k in range(20):
        kind, rng, sc = random_scene(k)
        assert max(sc.grid.occupied.shape) <= 64
        pos = floor_points(kind, rng, 20, z=float(rng.uniform(0.4, 1.2)))
        cands = [CandidateViewpoint(i, -1, p, float(rng.uniform(0, 2 * math.pi))) for i, p in enumerate(pos)]
        tp = sc.targets.points[rng.choice(len(sc.targets.points), 20, replace=False)]
        t0 = time.perf_counter()
        cm = compute_rewards(cands, tp, s, None, sc.sdf, sc.grid, use_mask=False, validate_sdf=0)
        elapsed += time.perf_counter() - t0
        sdf_rej += cm.stage_rejections["sdf"]
        g = sc.grid
        for i, c in enumerate(cands):
            for j, t in enumerate(tp):
                ref = oracle_frustum(c.position, c.yaw, t, s) and ray_clear_oracle(
                    g.occupied, g.origin, g.voxel_size, c.position, t)
                mismatches += ref != bool(cm.visible[i, j])
                pairs += 1
    ok = mismatches == 0 and elapsed < 60
    report(1, ok, f"{pairs} pairs on 20 scenes, {mismatches} mismatches vs ray-cast oracle "
                  f"({sdf_rej} SDF-stage rejections), staged time {elapsed:.2f} s (< 60 s)")


# ---------------------------------------------------------------- 2


def test_c2_sdf_stage_soundness(report):
    s = SensorModel(range_min=0.3, range_max=20.0, mount=MountTransform(z=0.8))
    mask = build_self_mask(default_body(0.8), 1024)
    changed, sdf_rej, pairs = 0, 0, 0
    for k in range(100):
        kind, rng, sc = random_scene(1000 + k)
        pos = floor_points(kind, rng, 6)
        cands = [CandidateViewpoint(i, -1, p, 0.0) for i, p in enumerate(pos)]
        on = compute_rewards(cands, sc.targets, s, mask, sc.sdf, sc.grid, validate_sdf=0)
        off = compute_rewards(cands, sc.targets, s, mask, None, sc.grid, use_sdf=False)
        changed += not np.array_equal(on.visible, off.visible)
        sdf_rej += on.stage_rejections["sdf"]
        pairs += on.visible.size
    report(2, changed == 0 and sdf_rej > 0,
           f"{changed}/100 trials changed by the SDF stage; it rejected {sdf_rej} of {pairs} pairs")


# ---------------------------------------------------------------- 3


def test_c3_inverse_fibonacci(report):
    mask = build_self_mask(default_body(0.8), 1024)
    d = np.random.default_rng(7).normal(size=(100_000, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    mask_lookup_many(mask, d[:10])  # compile
    t0 = time.perf_counter()
    got = mask_lookup_many(mask, d)
    dt = time.perf_counter() - t0
    from covplan.fibonacci import nearest_indices

    idx = nearest_indices(d, mask.directions)
    dirs = fibonacci_sphere(1024)
    nn = np.concatenate([np.argmax(d[a:a + 10000] @ dirs.T, axis=1) for a in range(0, len(d), 10000)])
    agree = int(np.sum(idx == nn))
    ok = agree == len(d) and np.array_equal(got, mask.blocked[nn]) and dt < 1.0
    report(3, ok, f"{agree}/{len(d)} nearest indices agree with brute force, lookup {dt * 1000:.1f} ms (< 1 s)")


# ---------------------------------------------------------------- 4


def test_c4_set_cover_quality(report):
    bound_ok = irr_ok = 0
    for k in range(200):
        rng = np.random.default_rng(k)
        nc, nt = int(rng.integers(1, 16)), int(rng.integers(1, 26))
        vis = rng.random((nc, nt)) < rng.uniform(0.1, 0.5)
        rows = [set(np.flatnonzero(r).tolist()) for r in vis]
        universe = set().union(*rows)
        g = select_greedy(vis)
        opt = exhaustive_set_cover(rows, universe)
        bound_ok += g.count <= greedy_bound(max(len(r) for r in rows)) * opt + 1e-9
        b = select_backtracking(vis)
        irr = b.covered == g.covered and all(
            not rows[c] <= set().union(*(rows[o] for o in b.selected if o != c)) for c in b.selected)
        irr_ok += irr
    report(4, bound_ok == 200 and irr_ok == 200,
           f"greedy bound held on {bound_ok}/200, backtracking irredundant on {irr_ok}/200")


# ---------------------------------------------------------------- 6, 7


def test_c6_tsp_quality(report):
    t0 = time.perf_counter()
    hits = bound_ok = 0
    for k in range(100):
        pts = np.random.default_rng(k).uniform(0, 10, (8, 2))
        c = np.linalg.norm(pts[:, None] - pts[None], axis=2)
        init = mst_initial_tour(c)
        out = anneal_tour(init, c, seed=k)
        bound_ok += out.total_cost <= 2 * mst_weight(c) + 1e-9 and init.total_cost <= 2 * mst_weight(c) + 1e-9
        hits += abs(out.total_cost - exhaustive_open_tour(c)) < 1e-9
    dt = time.perf_counter() - t0
    report(6, hits >= 95 and bound_ok == 100 and dt < 120,
           f"optimum on {hits}/100 (>= 95), 2-approx bound held on {bound_ok}/100, {dt:.1f} s (< 120 s)")


def test_c7_orientation_count(report):
    ex = [orientation_count(360, 1), orientation_count(90, 1), orientation_count(120, 3)]
    rng = np.random.default_rng(11)
    bearings = np.linspace(0, 360, 7201)
    good = 0
    for _ in range(1000):
        fov, n = float(rng.uniform(1, 360)), int(rng.integers(1, 7))
        N = orientation_count(fov, n)
        yaws = np.arange(N) * 360.0 / N
        diff = (bearings[:, None] - yaws[None] + 180.0) % 360.0 - 180.0
        good += (np.abs(diff) <= fov / 2 + 1e-9).sum(axis=1).min() >= n
    report(7, ex == [1, 4, 9] and good == 1000, f"examples {ex} (want [1, 4, 9]), sector coverage on {good}/1000")


# ---------------------------------------------------------------- building runs (5, 8, 9, 10)


@pytest.fixture(scope="module")
def building(tmp_path_factory):
    d = tmp_path_factory.mktemp("building")
    assert main(["gen-building", "-o", str(d / "model")]) == 0
    base = PipelineConfig.load(d / "model" / "config.toml")
    b = generate_building()
    runs = {}

    def run(key, workers, **sel):
        cfg = PipelineConfig.from_dict({"output_dir": str(d / key), "selection": sel}, base)
        runs[key] = run_pipeline(cfg, workers=workers)
        runs[key].extras["dir"] = d / key

    maxw = os.cpu_count() or 1
    run("w1", 1)
    run("w2", 2)
    run("wmax", maxw)
    if maxw != 1:
        run("rerun", 1)
    else:
        runs["rerun"] = runs["wmax"]
    run("mr100", 1, min_reward=100)
    return b, base, runs, maxw


def plan_bytes(res):
    return (res.extras["dir"] / "plan.json").read_bytes()


def test_c5_reward_trace_shape(report, building):
    _, _, runs, _ = building
    a, b = runs["w1"], runs["mr100"]
    tr = a.selection.reward_trace
    mono = all(x >= y for x, y in zip(tr, tr[1:]))
    n0, n1 = a.plan["n_selected"], b.plan["n_selected"]
    drop = 100 * (a.plan["coverage_rate"] - b.plan["coverage_rate"])
    report(5, mono and n1 < n0 and drop < 5,
           f"trace non-increasing={mono} {tr}; viewpoints {n0} (min_reward 0) vs {n1} (min_reward 100); "
           f"coverage drop {drop:.2f} pp (< 5)")


def test_c8_synthetic_end_to_end(report, building):
    b, _, runs, _ = building
    res = runs["w1"]
    plan = res.plan
    rooms = b.room_of(res.extras["targets"].points)
    covered = set().union(*(w["covered_target_ids"] for w in plan["waypoints"]))
    reach = [k for k, r in enumerate(rooms) if r and r != "S"]
    sealed = [k for k, r in enumerate(rooms) if r == "S"]
    rate = sum(k in covered for k in reach) / len(reach)
    in_s = sum(k in covered for k in sealed)
    ramp = int(b.on_ramp(np.array([w["position"] for w in plan["waypoints"]])).sum())
    h1 = hashlib.sha256(plan_bytes(res)).hexdigest()
    h2 = hashlib.sha256(plan_bytes(runs["rerun"])).hexdigest()
    ok = rate >= 0.98 and in_s == 0 and len(sealed) > 0 and ramp >= 1 and h1 == h2
    report(8, ok, f"reachable-room coverage {rate:.4f} (>= 0.98), {in_s}/{len(sealed)} sealed-room targets claimed, "
                  f"{ramp} waypoint(s) on the ramp, rerun hash {'equal' if h1 == h2 else 'DIFFERENT'} ({h1[:12]})")


def _place_obstacle(path, marks, grid, s_h):
    """First flat path vertex past 2.5 m with >= 1 m clearance and >= 1.5 m from every waypoint."""
    free = grid.state == 0
    clear = distance_transform_edt(free) * grid.cell_size
    wp_s = s_h[marks >= 0]
    for k in range(len(path)):
        if s_h[k] < 2.5 or abs(path[k, 2]) > 1e-9 or np.min(np.abs(wp_s - s_h[k])) < 1.5:
            continue
        if clear[grid.cell_of(path[k, :2])] >= 1.0:
            return k
    raise AssertionError("no obstacle site on the plan")


def test_c9_replanning(report, building):
    b, base, runs, _ = building
    plan = runs["w1"].plan
    path, marks = plan_polyline(plan)
    path, marks = np.asarray(path), np.asarray(marks)
    cs = base.sim.cell_size
    grid = OccupancyGrid2D.from_mesh(b.complete, cs, tuple(base.sim.band))
    fp = FootprintPolygon.rectangle(*base.robot.footprint)
    s_h = np.r_[0, np.cumsum(np.linalg.norm(np.diff(path[:, :2], axis=0), axis=1))]
    k = _place_obstacle(path, marks, grid, s_h)
    cx, cy = path[k, :2]
    box = np.array([[cx - 0.15, cy - 0.15], [cx + 0.15, cy - 0.15], [cx + 0.15, cy + 0.15], [cx - 0.15, cy + 0.15]])
    log = simulate_execution(path, marks, [ObstacleEvent(float(s_h[k] - 2.0), box)], grid, fp)

    reached = sorted(log.waypoints_reached) == list(range(plan["n_selected"]))
    one = len(log.replans) == 1
    rp = log.replans[0]
    keep = (s_h < rp["s_start"] - 1e-9) | (s_h > rp["s_end"] + 1e-9)
    pre, post = path[s_h < rp["s_start"] - 1e-9], path[s_h > rp["s_end"] + 1e-9]
    final = log.path
    preserved = (np.array_equal(final[:len(pre)], pre) and np.array_equal(final[len(final) - len(post):], post)
                 and len(pre) + len(post) == keep.sum())

    g2 = grid.copy()
    g2.mark_polygon(box)
    a = np.array([np.interp(rp["s_start"], s_h, path[:, i]) for i in range(2)])
    e = np.array([np.interp(rp["s_end"], s_h, path[:, i]) for i in range(2)])
    lo, hi = np.minimum(a, e) - 3.0, np.maximum(a, e) + 3.0
    ii, jj = np.nonzero(g2.state)
    obs = g2.centers(ii, jj)
    obs = obs[np.all((obs >= lo - 1) & (obs <= hi + 1), axis=1)]
    ref = grid_detour_oracle(obs, cs, fp.vertices, a, e, (lo, hi))
    overhead = log.driven_length - log.planned_length
    expect = ref - (rp["s_end"] - rp["s_start"])
    match = abs(overhead - expect) <= 2 * cs
    report(9, reached and one and preserved and match,
           f"obstacle at s={s_h[k]:.2f} m: waypoints reached={reached}, replans={len(log.replans)}, "
           f"unblocked poses preserved={preserved}, overhead {overhead:.3f} m vs oracle {expect:.3f} m "
           f"(tolerance {2 * cs:.2f} m)")


def test_c10_parallel_determinism(report, building):
    _, _, runs, maxw = building
    ref = plan_bytes(runs["w1"])
    same = [plan_bytes(runs[k]) == ref for k in ("w2", "wmax")]
    report(10, all(same), f"plan.json identical for workers 1, 2, {maxw}: {all(same)}"
                          + (" (this machine has one core, so max = 1)" if maxw == 1 else ""))
