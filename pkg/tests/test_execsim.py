import json
import math

import numpy as np
import pytest

from covplan.building import extrude_cells
from covplan.execsim import (EventScriptError, FootprintPolygon, OccupancyGrid2D, ReplanError, parse_events,
                             path_length, points_in_polygon, replan_blocked, simulate_execution, validate_path)

from conftest import enclosed
from oracles import grid_detour_oracle

CS = 0.05
FP = FootprintPolygon.rectangle(0.6, 0.4)


def box(x0, y0, x1, y1):
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], float)


def corridor(door=None):
    """9 m x 2 m grid, walls below y=0.2 and above y=1.8; optional cross wall at x=4.5 with a gap."""
    g = OccupancyGrid2D.empty((0, 0), CS, (180, 40))
    g.mark_polygon(box(-1, -1, 10, 0.2))
    g.mark_polygon(box(-1, 1.8, 10, 3))
    if door is not None:
        g.mark_polygon(box(4.4, 0, 4.6, door[0]))
        g.mark_polygon(box(4.4, door[1], 4.6, 2))
    return g


def straight_path():
    xs = np.arange(0.6, 8.4 + 1e-9, 0.3)
    path = np.stack([xs, np.full_like(xs, 1.0)], 1)
    marks = np.full(len(path), -1)
    for w, k in enumerate([0, 5, 20, len(path) - 1]):
        marks[k] = w
    return path, marks


def test_points_in_polygon():
    sq = box(0, 0, 1, 1)
    pts = np.array([[0.5, 0.5], [1.5, 0.5], [0.99, 0.01], [-0.01, 0.5]])
    assert points_in_polygon(pts, sq).tolist() == [True, False, True, False]


def test_grid_from_mesh_marks_walls_not_floor():
    g = OccupancyGrid2D.from_mesh(extrude_cells(enclosed(8, 8)).mesh, 0.05)
    assert g.state[g.cell_of([1.0, 1.0])] == 0
    assert g.state[g.cell_of([0.26, 1.0])] == 1  # inner face of the perimeter wall at x = 0.25
    # the faces close the room: no footprint pose straddling the wall is free
    assert validate_path(np.array([[1.0, 1.0], [-0.3, 1.0]]), g, FP)


def test_free_corridor_has_no_blocked_interval():
    path, _ = straight_path()
    assert validate_path(path, corridor(), FP) == []


def test_mid_corridor_obstacle_single_interval():
    g = corridor()
    g.mark_polygon(box(4.35, 0.85, 4.65, 1.15))
    path, _ = straight_path()
    ivs = validate_path(path, g, FP)
    assert len(ivs) == 1
    iv = ivs[0]
    # occupied centres span x in [4.375, 4.625]; the 0.6 m footprint meets them for s in [3.475, 4.325]
    assert iv.s_start <= 3.475 <= iv.blocked_from and iv.blocked_to <= 4.325 <= iv.s_end
    assert iv.blocked_from - iv.s_start <= CS + 1e-9 and iv.s_end - iv.blocked_to <= CS + 1e-9


def test_lateral_obstacle_beyond_circumscribed_radius():
    g = corridor()
    r = FP.circumscribed_radius
    g.mark_polygon(box(4.3, 1.0 + r + CS, 4.7, 1.75))
    path, _ = straight_path()
    assert validate_path(path, g, FP) == []


def test_replan_empty_is_identity():
    path, _ = straight_path()
    assert np.array_equal(replan_blocked(path, [], corridor(), FP), path)


def test_replan_detour_keeps_prefix_and_suffix():
    g = corridor()
    g.mark_polygon(box(4.35, 0.85, 4.65, 1.15))
    path, _ = straight_path()
    ivs = validate_path(path, g, FP)
    new = replan_blocked(path, ivs, g, FP)
    s = np.concatenate([[0], np.cumsum(np.linalg.norm(np.diff(path, axis=0), axis=1))])
    keep = (s < ivs[0].s_start - 1e-9) | (s > ivs[0].s_end + 1e-9)
    rows = {tuple(r) for r in new}
    assert all(tuple(r) in rows for r in path[keep])
    pre = path[s < ivs[0].s_start - 1e-9]
    assert np.array_equal(new[:len(pre)], pre)
    post = path[s > ivs[0].s_end + 1e-9]
    assert np.array_equal(new[-len(post):], post)
    assert validate_path(new, g, FP) == []
    assert path_length(new) > path_length(path)


def test_sealed_doorway_unreachable():
    g = corridor(door=(0.7, 1.3))
    path, _ = straight_path()
    assert validate_path(path, g, FP) == []
    g.mark_polygon(box(4.4, 0.6, 4.6, 1.4))
    ivs = validate_path(path, g, FP)
    with pytest.raises(ReplanError, match="unreachable interval"):
        replan_blocked(path, ivs, g, FP)


def test_simulate_without_events():
    path, marks = straight_path()
    log = simulate_execution(path, marks, [], corridor(), FP)
    assert log.driven_length == pytest.approx(log.planned_length)
    assert log.waypoints_reached == [0, 1, 2, 3]
    assert not log.replans


def detour_case():
    path, marks = straight_path()
    ob = box(4.35, 0.85, 4.65, 1.15)
    ev = parse_events({"events": [{"at_arclength_m": 2.5, "polygon": ob.tolist()}]})
    return path, marks, ev, ob


def test_simulate_single_obstacle():
    path, marks, ev, _ = detour_case()
    log = simulate_execution(path, marks, ev, corridor(), FP)
    assert len(log.replans) == 1
    assert log.waypoints_reached == [0, 1, 2, 3]
    assert log.driven_length > log.planned_length
    kinds = [e["type"] for e in log.events]
    assert kinds.index("obstacle_detected") < kinds.index("segment_replanned")
    assert sum(e["type"] == "sensor_capture" for e in log.events) == 4


def test_detour_overhead_vs_grid_oracle():
    path, marks, ev, ob = detour_case()
    g = corridor()
    log = simulate_execution(path, marks, ev, g, FP)
    rp = log.replans[0]
    g.mark_polygon(ob)
    ii, jj = np.nonzero(g.state)
    obstacles = g.centers(ii, jj)
    a = np.array([0.6 + rp["s_start"], 1.0])
    b = np.array([0.6 + rp["s_end"], 1.0])
    ref = grid_detour_oracle(obstacles, CS, FP.vertices, a, b, ((0, 0), (9, 2)))
    overhead = log.driven_length - log.planned_length
    assert math.isfinite(ref)
    assert abs(overhead - (ref - (rp["s_end"] - rp["s_start"]))) <= 2 * CS


@pytest.mark.parametrize("doc,msg", [
    ('{"events": [{"polygon": [[0,0],[1,0],[1,1]]}]}', r"events\[0\]: missing 'at_arclength_m'"),
    ('{"events": [{"at_arclength_m": 1, "polygon": [[0,0],[1,0],[1,1]]}, {"at_arclength_m": 2}]}',
     r"events\[1\]: missing 'polygon'"),
    ('{"events": [{"at_arclength_m": -1, "polygon": [[0,0],[1,0],[1,1]]}]}', r"events\[0\]"),
    ('{"events": [{"at_arclength_m": 1, "polygon": [[0,0],[1,0]]}]}', r"events\[0\]: polygon"),
    ('{"events": [{"at_arclength_m": 2, "polygon": [[0,0],[1,0],[1,1]]},'
     ' {"at_arclength_m": 1, "polygon": [[0,0],[1,0],[1,1]]}]}', r"events\[1\]: events must be sorted"),
    ("{not json", "invalid JSON"),
    ('[]', "'events' list"),
])
def test_parse_events_errors(doc, msg):
    with pytest.raises(EventScriptError, match=msg):
        parse_events(doc)


def test_parse_events_ok():
    ev = parse_events(json.dumps({"events": [{"at_arclength_m": 1.5, "polygon": [[0, 0], [1, 0], [1, 1]]}]}))
    assert ev[0].at_arclength_m == 1.5 and ev[0].polygon.shape == (3, 2)
