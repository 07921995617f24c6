"""End-to-end static analysis of a wall (optionally with ILT) under lumen pressure."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .assembly import ILT_STIFFNESS_RATIO, assemble, build_model, pressure_loads
from .materials import BCSpec, MaterialSpec
from .solver import SolveResult, solve_model
from .stress import StressField, StressStats, probe, recover_stress, stress_stats


@dataclass
class StaticResult:
    model: object
    solution: SolveResult
    stress: StressField
    stats: StressStats
    timings: dict = field(default_factory=dict)


def run_static(wall, pressure_mpa, materials=None, ilt=None, bcs: Optional[BCSpec] = None,
               probes=None, probe_max_distance=None, method="auto", rtol=1e-10) -> StaticResult:
    """Assemble, load, solve and post-process; statistics are over wall nodes."""
    import time

    bcs = bcs or BCSpec()
    t = {}
    t0 = time.perf_counter()
    model = build_model(wall, ilt, materials)
    K = assemble(model)
    f = pressure_loads(model, pressure_mpa)
    t["assemble_s"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    sol = solve_model(model, K, f, bcs, method=method, rtol=rtol, overwrite=True)
    del K
    t["solve_s"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    field_ = recover_stress(model, sol.displacements, part="wall")
    pr = probe(field_, probes, probe_max_distance) if probes is not None and len(probes) else []
    stats = stress_stats(field_, pr)
    t["stress_s"] = time.perf_counter() - t0
    return StaticResult(model, sol, field_, stats, t)


@dataclass
class IndependenceReport:
    youngs_moduli: list
    p99: list
    peak: list
    relative_spread: float  # (max - min) / mean of p99
    max_nodal_change: float  # max relative nodal stress change vs the first run

    def to_dict(self):
        return {
            "youngs_moduli_MPa": list(self.youngs_moduli),
            "p99_MPa": list(self.p99),
            "peak_MPa": list(self.peak),
            "p99_relative_spread": self.relative_spread,
            "max_relative_nodal_change": self.max_nodal_change,
        }


def material_independence_check(wall, pressure_mpa, youngs_moduli, poisson_ratio=0.49, ilt=None,
                                ilt_ratio=ILT_STIFFNESS_RATIO, ilt_poisson=0.45, bcs=None,
                                method="auto") -> IndependenceReport:
    """Solve once per wall modulus with fixed Poisson ratio and wall:ILT ratio."""
    if len(youngs_moduli) < 2:
        raise ValueError("need at least two moduli")
    p99, peak, fields = [], [], []
    for E in youngs_moduli:
        mats = {"wall": MaterialSpec(E, poisson_ratio), "ilt": MaterialSpec(E / ilt_ratio, ilt_poisson)}
        r = run_static(wall, pressure_mpa, mats, ilt=ilt, bcs=bcs, method=method)
        p99.append(r.stats.p99)
        peak.append(r.stats.peak)
        fields.append(r.stress.tensors)
    ref = fields[0]
    scale = np.abs(ref).max()
    change = max(float(np.abs(f - ref).max() / scale) for f in fields[1:])
    spread = float((max(p99) - min(p99)) / np.mean(p99))
    return IndependenceReport(list(youngs_moduli), p99, peak, spread, change)
