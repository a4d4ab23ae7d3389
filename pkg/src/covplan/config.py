"""Pipeline configuration with a lossless TOML round trip."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import tomli
import tomli_w


class ConfigError(ValueError):
    pass


@dataclass
class ModelsConfig:
    complete: str = ""
    target: str = ""


@dataclass
class GridConfig:
    voxel_size: float = 0.075
    sdf_voxel_size: float = 0.0375
    sdf_truncation: float = 0.0  # 0 means 10 SDF voxels


@dataclass
class TargetsConfig:
    density: float = 50.0  # points per m^2
    seed: int = 0


@dataclass
class RobotConfig:
    start: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    max_step: float = 0.3
    inscribed_radius: float = 0.3
    cost_threshold: float = 0.8
    footprint: list = field(default_factory=lambda: [0.6, 0.4])  # length, width (m)
    # convex body parts as [[xmin, ymin, zmin], [xmax, ymax, zmax]] boxes; empty means the default body
    body_boxes: list = field(default_factory=list)


@dataclass
class SensorConfig:
    fov_h: float = 360.0
    fov_v: float = 180.0
    range_min: float = 0.3
    range_max: float = 20.0
    mount: list = field(default_factory=lambda: [0.0, 0.0, 0.8, 0.0])  # x, y, z, yaw


@dataclass
class CandidatesConfig:
    count: int = 327
    seed: int = 0
    overlap: int = 1
    yaw_offset: float = 0.0


@dataclass
class VisibilityConfig:
    mask_size: int = 1024
    use_sdf: bool = True


@dataclass
class SelectionConfig:
    solver: str = "greedy"
    min_reward: int = 0
    lam: float = 0.7
    trials: int = 32
    seed: int = 0


@dataclass
class RoutingConfig:
    penalty_weight: float = 1.0
    T0: float = 0.0  # 0 means initial tour cost / n
    alpha: float = 0.995
    iters: int = 0  # 0 means 20000 * n
    seed: int = 0
    closed: bool = False


@dataclass
class SimConfig:
    cell_size: float = 0.05
    band: list = field(default_factory=lambda: [0.1, 1.5])


@dataclass
class PipelineConfig:
    models: ModelsConfig = field(default_factory=ModelsConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    targets: TargetsConfig = field(default_factory=TargetsConfig)
    robot: RobotConfig = field(default_factory=RobotConfig)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    candidates: CandidatesConfig = field(default_factory=CandidatesConfig)
    visibility: VisibilityConfig = field(default_factory=VisibilityConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    routing: RoutingConfig = field(default_factory=RoutingConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    output_dir: str = "out"

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict, base: PipelineConfig | None = None) -> PipelineConfig:
        """Overlay ``data`` on ``base`` (defaults when omitted); unknown keys are errors."""
        cfg = dataclasses.replace(base) if base is not None else cls()
        cfg = cls(**{f.name: _copy(getattr(cfg, f.name)) for f in fields(cls)})
        for key, val in data.items():
            if key == "output_dir":
                cfg.output_dir = str(val)
                continue
            section = getattr(cfg, key, None)
            if section is None or not dataclasses.is_dataclass(section):
                raise ConfigError(f"unknown config section '{key}'")
            if not isinstance(val, dict):
                raise ConfigError(f"section '{key}' must be a table")
            names = {f.name: f for f in fields(section)}
            for k, v in val.items():
                if k not in names:
                    raise ConfigError(f"unknown key '{key}.{k}'")
                setattr(section, k, _coerce(getattr(section, k), v, f"{key}.{k}"))
        cfg.validate()
        return cfg

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    @classmethod
    def from_toml(cls, text: str, base: PipelineConfig | None = None) -> PipelineConfig:
        try:
            data = tomli.loads(text)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML: {exc}") from exc
        return cls.from_dict(data, base)

    @classmethod
    def load(cls, path, base: PipelineConfig | None = None) -> PipelineConfig:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_toml(text, base)

    def save(self, path) -> None:
        Path(path).write_text(self.to_toml())

    def digest(self) -> str:
        """SHA-256 of the settings that affect the plan.

        Output and model locations are left out; the model contents are hashed separately.
        """
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("models")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    # -- checks -------------------------------------------------------------

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        g, t, r, s = self.grid, self.targets, self.robot, self.sensor
        need(g.voxel_size > 0, "grid.voxel_size must be > 0")
        need(g.sdf_voxel_size > 0, "grid.sdf_voxel_size must be > 0")
        need(g.sdf_truncation == 0 or g.sdf_truncation >= 2 * g.sdf_voxel_size,
             "grid.sdf_truncation must be 0 or >= 2 * sdf_voxel_size")
        need(t.density > 0, "targets.density must be > 0")
        need(len(r.start) == 3, "robot.start must be [x, y, z]")
        need(r.max_step > 0, "robot.max_step must be > 0")
        need(r.inscribed_radius >= 0, "robot.inscribed_radius must be >= 0")
        need(0 < r.cost_threshold <= 1, "robot.cost_threshold must be in (0, 1]")
        need(len(r.footprint) == 2 and min(r.footprint) > 0, "robot.footprint must be [length, width] > 0")
        for k, b in enumerate(r.body_boxes):
            need(len(b) == 2 and all(len(c) == 3 for c in b), f"robot.body_boxes[{k}] must be [[x,y,z],[x,y,z]]")
        need(0 < s.fov_h <= 360, "sensor.fov_h must be in (0, 360]")
        need(0 < s.fov_v <= 180, "sensor.fov_v must be in (0, 180]")
        need(0 <= s.range_min < s.range_max, "sensor range must satisfy 0 <= range_min < range_max")
        need(len(s.mount) == 4, "sensor.mount must be [x, y, z, yaw]")
        c = self.candidates
        need(c.count >= 1, "candidates.count must be >= 1")
        need(c.overlap >= 1, "candidates.overlap must be >= 1")
        need(self.visibility.mask_size >= 64, "visibility.mask_size must be >= 64")
        sel = self.selection
        need(sel.solver in ("greedy", "backtracking", "probabilistic"),
             "selection.solver must be greedy, backtracking or probabilistic")
        need(sel.min_reward >= 0, "selection.min_reward must be >= 0")
        need(sel.lam > 0, "selection.lam must be > 0")
        need(sel.trials >= 1, "selection.trials must be >= 1")
        ro = self.routing
        need(ro.T0 >= 0, "routing.T0 must be >= 0")
        need(0 < ro.alpha < 1, "routing.alpha must be in (0, 1)")
        need(ro.iters >= 0, "routing.iters must be >= 0")
        need(self.sim.cell_size > 0, "sim.cell_size must be > 0")
        need(len(self.sim.band) == 2 and self.sim.band[0] < self.sim.band[1], "sim.band must be [low, high]")
        for sec in (g, t, r, s, c, sel, ro, self.sim):
            for f in fields(sec):
                v = getattr(sec, f.name)
                if isinstance(v, float):
                    need(math.isfinite(v), f"{f.name} must be finite")


def _copy(section):
    return dataclasses.replace(section) if dataclasses.is_dataclass(section) else section


def _coerce(current, value, name):
    try:
        if isinstance(current, bool):
            if not isinstance(value, bool):
                raise TypeError
            return value
        if isinstance(current, int):
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise TypeError
            return int(value)
        if isinstance(current, float):
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if isinstance(current, str):
            if not isinstance(value, str):
                raise TypeError
            return value
        if isinstance(current, list):
            if not isinstance(value, list):
                raise TypeError
            return json.loads(json.dumps(value))
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected {type(current).__name__}, got {value!r}") from None
    return value
