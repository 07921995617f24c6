"""Linear elastostatics of the meshed wall (and optional ILT) under internal pressure."""

from .analysis import IndependenceReport, StaticResult, material_independence_check, run_static
from .assembly import FEModel, Part, apply_pressure, assemble, build_model, default_materials, pressure_loads
from .materials import BCSpec, MaterialSpec, PressureSpec, map_pressure
from .solver import SolveResult, check_supports, fixed_mask, pcg, solve, solve_model
from .stress import (
    ProbeResult,
    StressField,
    StressStats,
    max_principal,
    principal_stresses,
    probe,
    recover_stress,
    stress_stats,
)

__all__ = [
    "BCSpec", "FEModel", "IndependenceReport", "MaterialSpec", "Part", "PressureSpec",
    "ProbeResult", "SolveResult", "StaticResult", "StressField", "StressStats",
    "apply_pressure", "assemble", "build_model", "check_supports", "default_materials",
    "fixed_mask", "map_pressure", "material_independence_check", "max_principal", "pcg",
    "pressure_loads", "principal_stresses", "probe", "recover_stress", "run_static",
    "solve", "solve_model", "stress_stats",
]
