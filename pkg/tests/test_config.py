import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covplan.config import ConfigError, PipelineConfig


@settings(max_examples=100, deadline=None)
@given(
    voxel=st.floats(0.01, 1.0),
    density=st.floats(0.1, 1000),
    count=st.integers(1, 5000),
    solver=st.sampled_from(["greedy", "backtracking", "probabilistic"]),
    min_reward=st.integers(0, 1000),
    start=st.lists(st.floats(-100, 100), min_size=3, max_size=3),
    use_sdf=st.booleans(),
    path=st.text(st.characters(blacklist_categories=("Cs",)), max_size=20),
)
def test_toml_round_trip(voxel, density, count, solver, min_reward, start, use_sdf, path):
    cfg = PipelineConfig.from_dict({
        "models": {"complete": path}, "grid": {"voxel_size": voxel}, "targets": {"density": density},
        "candidates": {"count": count}, "selection": {"solver": solver, "min_reward": min_reward},
        "robot": {"start": start}, "visibility": {"use_sdf": use_sdf}})
    back = PipelineConfig.from_toml(cfg.to_toml())
    assert back == cfg and back.digest() == cfg.digest()


def test_save_load(tmp_path):
    cfg = PipelineConfig.from_dict({"selection": {"min_reward": 100}})
    cfg.save(tmp_path / "c.toml")
    assert PipelineConfig.load(tmp_path / "c.toml") == cfg


def test_overlay_keeps_base():
    base = PipelineConfig.from_dict({"grid": {"voxel_size": 0.1}})
    cfg = PipelineConfig.from_dict({"targets": {"seed": 3}}, base)
    assert cfg.grid.voxel_size == 0.1 and cfg.targets.seed == 3 and base.targets.seed == 0


def test_digest_ignores_locations():
    a = PipelineConfig.from_dict({"output_dir": "x", "models": {"complete": "/a/m.obj"}})
    b = PipelineConfig.from_dict({"output_dir": "y", "models": {"complete": "/b/m.obj"}})
    assert a.digest() == b.digest()
    assert a.digest() != PipelineConfig.from_dict({"targets": {"seed": 1}}).digest()


@pytest.mark.parametrize("data,msg", [
    ({"grid": {"voxel": 0.1}}, "unknown key 'grid.voxel'"),
    ({"gird": {}}, "unknown config section 'gird'"),
    ({"grid": 3}, "must be a table"),
    ({"grid": {"voxel_size": "big"}}, "grid.voxel_size: expected float"),
    ({"candidates": {"count": 2.5}}, "candidates.count: expected int"),
    ({"visibility": {"use_sdf": 1}}, "visibility.use_sdf: expected bool"),
    ({"grid": {"voxel_size": 0}}, "grid.voxel_size must be > 0"),
    ({"grid": {"sdf_truncation": 0.01}}, "sdf_truncation"),
    ({"selection": {"min_reward": -1}}, "min_reward must be >= 0"),
    ({"selection": {"solver": "ilp"}}, "selection.solver"),
    ({"sensor": {"fov_h": 400}}, "sensor.fov_h"),
    ({"sensor": {"range_min": 5, "range_max": 1}}, "sensor range"),
    ({"robot": {"start": [0, 0]}}, "robot.start"),
    ({"routing": {"alpha": 1.0}}, "routing.alpha"),
    ({"visibility": {"mask_size": 10}}, "mask_size"),
    ({"targets": {"density": float("inf")}}, "density must be finite"),
])
def test_invalid(data, msg):
    with pytest.raises(ConfigError, match=msg):
        PipelineConfig.from_dict(data)


def test_bad_toml(tmp_path):
    with pytest.raises(ConfigError, match="invalid TOML"):
        PipelineConfig.from_toml("grid = [")
    with pytest.raises(ConfigError, match="cannot read config"):
        PipelineConfig.load(tmp_path / "missing.toml")
