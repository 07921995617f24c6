"""Configuration, end-to-end stages, reports and the command line."""

from .config import PipelineConfig, config_from_dict, config_to_dict, load_config
from .stages import (
    ConvergenceStudy,
    MeshRun,
    RunManifest,
    SolveRun,
    prepare_geometry,
    quality_gate,
    run_convergence,
    run_mesh,
    run_solve,
    verify_manifest,
)

__all__ = [
    "ConvergenceStudy", "MeshRun", "PipelineConfig", "RunManifest", "SolveRun",
    "config_from_dict", "config_to_dict", "load_config", "prepare_geometry",
    "quality_gate", "run_convergence", "run_mesh", "run_solve", "verify_manifest",
]
