"""Command line entry point: plan, simulate, gen-building, plot-data."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, PipelineConfig

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 2, 3

log = logging.getLogger("covplan")

# flag -> (section, key); None section means a top-level field
FLAG_MAP = {
    "complete": ("models", "complete"),
    "target": ("models", "target"),
    "voxel_size": ("grid", "voxel_size"),
    "sdf_voxel_size": ("grid", "sdf_voxel_size"),
    "sdf_truncation": ("grid", "sdf_truncation"),
    "density": ("targets", "density"),
    "target_seed": ("targets", "seed"),
    "start": ("robot", "start"),
    "cost_threshold": ("robot", "cost_threshold"),
    "candidates": ("candidates", "count"),
    "candidate_seed": ("candidates", "seed"),
    "overlap": ("candidates", "overlap"),
    "fov_h": ("sensor", "fov_h"),
    "fov_v": ("sensor", "fov_v"),
    "range_max": ("sensor", "range_max"),
    "mask_size": ("visibility", "mask_size"),
    "min_reward": ("selection", "min_reward"),
    "solver": ("selection", "solver"),
    "tsp_seed": ("routing", "seed"),
    "tsp_iters": ("routing", "iters"),
    "output": (None, "output_dir"),
}


def _parse_set(items) -> dict:
    """``section.key=value`` pairs; values are parsed as JSON when possible."""
    out = {}
    for item in items or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        key, raw = item.split("=", 1)
        section, name = key.split(".", 1)
        try:
            val = json.loads(raw)
        except json.JSONDecodeError:
            val = raw
        out.setdefault(section, {})[name] = val
    return out


def build_config(args) -> PipelineConfig:
    """Defaults, then the config file, then ``--set`` pairs, then explicit flags."""
    cfg = PipelineConfig.load(args.config) if getattr(args, "config", None) else PipelineConfig()
    overrides = _parse_set(getattr(args, "set", None))
    for flag, (section, key) in FLAG_MAP.items():
        val = getattr(args, flag, None)
        if val is None:
            continue
        if section is None:
            overrides[key] = val
        else:
            overrides.setdefault(section, {})[key] = val
    cfg = PipelineConfig.from_dict(overrides, cfg)
    if not cfg.models.complete or not cfg.models.target:
        raise ConfigError("models.complete and models.target are required")
    return cfg


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override any config field")
    p.add_argument("--complete", help="complete model mesh (OBJ/PLY)")
    p.add_argument("--target", help="target sub-model mesh (OBJ/PLY)")
    p.add_argument("--voxel-size", type=float)
    p.add_argument("--sdf-voxel-size", type=float)
    p.add_argument("--sdf-truncation", type=float)
    p.add_argument("--density", type=float, help="target points per m^2")
    p.add_argument("--target-seed", type=int)
    p.add_argument("--start", type=float, nargs=3, metavar=("X", "Y", "Z"))
    p.add_argument("--cost-threshold", type=float)
    p.add_argument("--candidates", type=int, help="number of candidate positions")
    p.add_argument("--candidate-seed", type=int)
    p.add_argument("--overlap", type=int, help="orientation overlap factor n")
    p.add_argument("--fov-h", type=float)
    p.add_argument("--fov-v", type=float)
    p.add_argument("--range-max", type=float)
    p.add_argument("--mask-size", type=int)
    p.add_argument("--min-reward", type=int)
    p.add_argument("--solver", choices=["greedy", "backtracking", "probabilistic"])
    p.add_argument("--tsp-seed", type=int)
    p.add_argument("--tsp-iters", type=int)
    p.add_argument("--output", "-o", help="output directory")


def cmd_plan(args) -> int:
    from .pipeline import PipelineError, run_pipeline

    try:
        cfg = build_config(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    if args.dump_config:
        sys.stdout.write(cfg.to_toml())
        return EXIT_OK
    try:
        res = run_pipeline(cfg, workers=args.workers)
    except PipelineError as exc:
        log.error("%s", exc)
        return EXIT_STAGE
    out = Path(cfg.output_dir)
    cfg.save(out / "config.toml")
    p = res.plan
    print(f"waypoints {p['n_selected']}  coverage {p['coverage_rate']:.4f}  path {p['total_path_length']:.2f} m  "
          f"time {res.timing['total']:.1f} s  -> {out / 'plan.json'}")
    return EXIT_OK


def run_simulation(plan_path, events_path, cfg: PipelineConfig, out_dir=None):
    """Simulate the plan in ``plan_path`` against the event script; write the log and summary."""
    from .execsim import FootprintPolygon, OccupancyGrid2D, load_events, simulate_execution
    from .mesh import load_mesh
    from .pipeline import plan_polyline

    plan = json.loads(Path(plan_path).read_text())
    events = load_events(events_path) if events_path else []
    mesh = load_mesh(cfg.models.complete)
    grid = OccupancyGrid2D.from_mesh(mesh, cfg.sim.cell_size, tuple(cfg.sim.band))
    foot = FootprintPolygon.rectangle(*cfg.robot.footprint)
    path, marks = plan_polyline(plan)
    result = simulate_execution(path, marks, events, grid, foot)
    out = Path(out_dir or Path(plan_path).parent)
    out.mkdir(parents=True, exist_ok=True)
    result.write_jsonl(out / "execution_log.jsonl")
    (out / "execution_summary.json").write_text(json.dumps(result.summary(), indent=2) + "\n")
    return result


def cmd_simulate(args) -> int:
    from .execsim import EventScriptError, ReplanError

    try:
        cfg = build_config(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    try:
        res = run_simulation(args.plan, args.events, cfg, args.output)
    except (EventScriptError, OSError, json.JSONDecodeError) as exc:
        log.error("input error: %s", exc)
        return EXIT_CONFIG
    except (ReplanError, ValueError) as exc:
        log.error("[simulate] %s", exc)
        return EXIT_STAGE
    print(json.dumps(res.summary(), indent=2))
    return EXIT_OK


def cmd_gen_building(args) -> int:
    from .building import generate_building

    b = generate_building(args.cell, args.ramp_rise, args.wall_height)
    out = Path(args.output)
    paths = b.write(out)
    cfg = PipelineConfig()
    cfg.models.complete = str(Path(paths["complete"]).resolve())
    cfg.models.target = str(Path(paths["target"]).resolve())
    cfg.robot.start = [float(x) for x in b.start]
    cfg.output_dir = str((out / "plan").resolve())
    cfg.save(out / "config.toml")
    print(f"wrote {paths['complete']}, {paths['target']}, {paths['meta']}, {out / 'config.toml'}")
    return EXIT_OK


def cmd_plot_data(args) -> int:
    from .pipeline import plan_polyline

    try:
        plan = json.loads(Path(args.plan).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        log.error("cannot read plan: %s", exc)
        return EXIT_CONFIG
    out = Path(args.output or Path(args.plan).parent)
    out.mkdir(parents=True, exist_ok=True)
    path, _ = plan_polyline(plan)
    with open(out / "path.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "x", "y", "z"])
        for k, q in enumerate(path):
            w.writerow([k, *(f"{v:.6f}" for v in q)])
    with open(out / "waypoints.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["order", "x", "y", "z", "yaw", "n_covered"])
        for wp in plan["waypoints"]:
            w.writerow([wp["order"], *(f"{v:.6f}" for v in wp["position"]), f"{wp['yaw']:.6f}",
                        len(wp["covered_target_ids"])])
    print(f"wrote {out / 'path.csv'} and {out / 'waypoints.csv'}")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="covplan", description="Offline coverage path planning on 3D meshes.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="run the planning pipeline")
    _add_config_flags(p)
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--dump-config", action="store_true", help="print the merged config and exit")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="execute a plan against scripted obstacles")
    _add_config_flags(p)
    p.add_argument("--plan", required=True, help="plan.json")
    p.add_argument("--events", help="event script JSON")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gen-building", help="write the synthetic test building and a matching config")
    p.add_argument("--output", "-o", default="building")
    p.add_argument("--cell", type=float, default=0.25)
    p.add_argument("--ramp-rise", type=float, default=0.5)
    p.add_argument("--wall-height", type=float, default=2.5)
    p.set_defaults(func=cmd_gen_building)

    p = sub.add_parser("plot-data", help="export the planned path and waypoints as CSV")
    p.add_argument("--plan", required=True)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_plot_data)
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    if getattr(args, "workers", 1) is not None and getattr(args, "workers", 1) < 1:
        log.error("config error: --workers must be >= 1")
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
