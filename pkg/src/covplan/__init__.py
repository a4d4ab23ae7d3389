"""Offline coverage path planning for ground robots on 3D building meshes."""

from .config import ConfigError, PipelineConfig
from .mesh import TriangleMesh, load_mesh
from .pipeline import PipelineError, run_pipeline

__version__ = "0.1.0"

__all__ = ["ConfigError", "PipelineConfig", "PipelineError", "TriangleMesh", "load_mesh", "run_pipeline"]
