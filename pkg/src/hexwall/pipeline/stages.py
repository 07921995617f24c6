"""End-to-end stages shared by the command line and the test-suite."""

import dataclasses
import hashlib
import json
import logging
import os
import platform
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import __version__
from ..errors import QualityGateError
from ..exporters import wall_volume_mesh, write_inp, write_json, write_vtk
from ..fem.analysis import run_static
from ..fem.stress import recover_stress
from ..geometry import (
    extract_centerline,
    load_stl,
    profiles_to_dict,
    slice_profiles,
    smooth_profiles,
    synth_aaa,
)
from ..hexmesher import laplace_smooth_mesh, sweep
from ..quality import quality_report
from ..tetfill import auto_n_radial, build_ilt, check_conformal
from .config import PipelineConfig, config_to_dict

log = logging.getLogger(__name__)

COARSE_SLICES = 40
COARSE_THETA = 64


# --------------------------------------------------------------------------
# manifest


def sha256_file(path, chunk=1 << 20):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(chunk), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    version: str = __version__
    timings: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    environment: dict = field(default_factory=lambda: {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "threads": os.environ.get("HEXWALL_THREADS", ""),
    })

    def time(self, stage):
        return _Timer(self.timings, stage)

    def add_file(self, out_dir, path):
        rel = os.path.relpath(path, out_dir)
        self.files[rel] = sha256_file(path)

    def to_dict(self):
        return dataclasses.asdict(self)

    def write(self, out_dir):
        path = os.path.join(out_dir, "run_manifest.json")
        write_json(path, self.to_dict())
        return path


class _Timer:
    def __init__(self, store, stage):
        self.store, self.stage = store, stage

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.store[self.stage] = self.store.get(self.stage, 0.0) + time.perf_counter() - self.t0
        return False


def verify_manifest(out_dir):
    """Files whose digest differs from the manifest (or that are missing)."""
    with open(os.path.join(out_dir, "run_manifest.json")) as fh:
        m = json.load(fh)
    drift = []
    for rel, digest in m["files"].items():
        p = os.path.join(out_dir, rel)
        if not os.path.exists(p) or sha256_file(p) != digest:
            drift.append(rel)
    return drift


# --------------------------------------------------------------------------
# geometry and meshing


@dataclass
class PreparedGeometry:
    wall_surface: object
    lumen_surface: Optional[object]
    centerline: object
    profiles: list
    lumen_profiles: Optional[list]
    params: object  # resolved MeshParams
    smoothing_area_change: float = 0.0


def load_surfaces(cfg: PipelineConfig):
    g = cfg.geometry
    if g.source == "synthetic":
        wall_s, lumen_s = synth_aaa(g.synthetic)
        return wall_s, lumen_s if cfg.ilt.enabled else None
    wall_s = load_stl(g.wall_stl)
    lumen_s = load_stl(g.lumen_stl) if cfg.ilt.enabled else None
    return wall_s, lumen_s


def prepare_geometry(cfg: PipelineConfig, params=None, surfaces=None) -> PreparedGeometry:
    """Centerline and per-slice profiles at the resolution the mesh needs.

    A coarse pass measures length and mean radius, which fix the number of
    rings and angles; the surfaces are then sliced once more at that
    resolution.
    """
    params = params or cfg.mesh.params()
    wall_s, lumen_s = surfaces or load_surfaces(cfg)
    axis = cfg.geometry.axis_hint
    coarse = extract_centerline(wall_s, axis, n_slices=COARSE_SLICES)
    radii = np.concatenate([p.radii for p in slice_profiles(wall_s, coarse, COARSE_THETA)])
    mid_radius = float(radii.mean()) - 0.5 * params.wall_thickness
    n_axial = params.resolve_n_axial(coarse.length)
    n_theta = params.resolve_n_theta(mid_radius)
    params = dataclasses.replace(params, n_axial=n_axial, n_theta=n_theta)
    cl = extract_centerline(wall_s, axis, n_slices=n_axial + 1)
    profiles = slice_profiles(wall_s, cl, n_theta)
    change = 0.0
    if cfg.geometry.profile_smoothing:
        profiles, change = smooth_profiles(profiles, cfg.geometry.profile_smoothing,
                                           return_area_change=True)
    lumen_profiles = slice_profiles(lumen_s, cl, n_theta) if lumen_s is not None else None
    return PreparedGeometry(wall_s, lumen_s, cl, profiles, lumen_profiles, params, change)


def build_wall(cfg: PipelineConfig, geo: PreparedGeometry):
    wall = sweep(geo.profiles, geo.params, geo.centerline)
    if cfg.mesh.smoothing_iterations:
        wall = laplace_smooth_mesh(wall, cfg.mesh.smoothing_iterations)
    return wall


def build_thrombus(cfg: PipelineConfig, geo: PreparedGeometry, wall):
    n_radial = cfg.ilt.n_radial
    if not n_radial:
        _, pts = wall.inner_rings()
        centers = np.stack([p.center for p in geo.lumen_profiles])
        inner = np.linalg.norm(pts - centers[:, None, :], axis=2)
        lumen = np.stack([p.radii for p in geo.lumen_profiles])
        n_radial = auto_n_radial(float((inner - lumen).mean()), cfg.ilt.element_size)
    return build_ilt(wall, geo.lumen_profiles, n_radial)


@dataclass
class MeshRun:
    geometry: PreparedGeometry
    wall: object
    ilt: Optional[object]
    quality: object
    conformity: Optional[object] = None


def quality_gate(report, strict=False):
    """Raise :class:`QualityGateError` on Jacobian failures (and on any failure if strict)."""
    summ = report.summary()
    bad = {k: v["failed_jacobian"] for k, v in summ.items() if v["failed_jacobian"]}
    if bad:
        raise QualityGateError(f"elements below the scaled-Jacobian threshold: {bad}", summ)
    warn = {}
    for name, v in summ.items():
        n = (v["failed_angle"] or 0) + (v["failed_skew"] or 0)
        if n:
            warn[name] = (v["failed_angle"], v["failed_skew"], v["failed_angle_percent"])
    for name, (na, ns, pct) in warn.items():
        msg = f"{name}: {na} elements ({pct:.3f}%) outside the angle range"
        if ns:
            msg += f", {ns} above the skew limit"
        log.warning(msg)
    if strict and warn:
        raise QualityGateError(f"strict quality: angle/skew failures in {sorted(warn)}", summ)
    return warn


def run_mesh(cfg: PipelineConfig, manifest: Optional[RunManifest] = None, params=None,
             gate=True) -> MeshRun:
    manifest = manifest or RunManifest("mesh", config_to_dict(cfg))
    with manifest.time("geometry"):
        geo = prepare_geometry(cfg, params)
    with manifest.time("wall_mesh"):
        wall = build_wall(cfg, geo)
    ilt = conf = None
    if cfg.ilt.enabled:
        with manifest.time("ilt_mesh"):
            ilt = build_thrombus(cfg, geo, wall)
            conf = check_conformal(wall, ilt)
    with manifest.time("quality"):
        report = quality_report(wall, ilt, cfg.quality.thresholds())
    run = MeshRun(geo, wall, ilt, report, conf)
    if gate:
        quality_gate(report, cfg.quality.strict)
    return run


def default_probe_points(wall):
    """Two outer-surface and two inner-surface nodes on the middle ring."""
    ids = wall.lattice_ids()
    ns, nt, nl1 = ids.shape
    j = ns // 2
    pick = [ids[j, 0, 0], ids[j, nt // 2, 0], ids[j, nt // 4, nl1 - 1], ids[j, 3 * nt // 4, nl1 - 1]]
    return wall.nodes[pick]


def write_mesh_outputs(cfg: PipelineConfig, run: MeshRun, out_dir, manifest: RunManifest):
    os.makedirs(out_dir, exist_ok=True)
    fmts = set(cfg.output.formats)
    vm = wall_volume_mesh(run.wall, run.ilt, quadratic=cfg.output.quadratic)
    paths = []
    if "vtk" in fmts:
        p = os.path.join(out_dir, "mesh.vtk")
        write_vtk(p, vm, "hexwall wall mesh" + (" with ILT" if run.ilt is not None else ""))
        paths.append(p)
    if "inp" in fmts:
        p = os.path.join(out_dir, "mesh.inp")
        write_inp(p, vm)
        paths.append(p)
    p = os.path.join(out_dir, "quality.json")
    write_json(p, run.quality.to_dict())
    paths.append(p)
    if "json" in fmts:
        p = os.path.join(out_dir, "centerline.json")
        write_json(p, run.geometry.centerline.to_dict())
        paths.append(p)
        p = os.path.join(out_dir, "profiles.json")
        write_json(p, profiles_to_dict(run.geometry.profiles))
        paths.append(p)
    for p in paths:
        manifest.add_file(out_dir, p)
    return paths


# --------------------------------------------------------------------------
# analysis


@dataclass
class SolveRun:
    mesh: MeshRun
    static: object
    pressure_kpa: float
    probes: np.ndarray


def run_solve(cfg: PipelineConfig, manifest: Optional[RunManifest] = None, params=None,
              mesh_run: Optional[MeshRun] = None, probes=None) -> SolveRun:
    manifest = manifest or RunManifest("solve", config_to_dict(cfg))
    run = mesh_run or run_mesh(cfg, manifest, params)
    if probes is None:
        probes = np.asarray(cfg.probes, dtype=np.float64) if cfg.probes else default_probe_points(run.wall)
    p_kpa = cfg.pressure.kpa()
    with manifest.time("solve"):
        res = run_static(
            run.wall, p_kpa * 1e-3, cfg.material.materials(), ilt=run.ilt, bcs=cfg.supports,
            probes=probes, probe_max_distance=run.geometry.params.target_element_size,
            method=cfg.solver.method, rtol=cfg.solver.rtol,
        )
    manifest.results["applied_pressure_kPa"] = p_kpa
    manifest.results["stats"] = {"peak_MPa": res.stats.peak, "p99_MPa": res.stats.p99}
    manifest.results["solver"] = {k: v for k, v in res.solution.to_dict().items() if k != "residual_history"}
    return SolveRun(run, res, p_kpa, np.asarray(probes))


def nodal_max_principal(sr: SolveRun):
    """Max principal stress on every node of the analysed model (wall values on the interface)."""
    model = sr.static.model
    values = np.full(model.n_nodes, np.nan)
    if sr.mesh.ilt is not None:
        ilt_field = recover_stress(model, sr.static.solution.displacements, part="ilt")
        values[ilt_field.node_ids] = ilt_field.max_principal
    values[sr.static.stress.node_ids] = sr.static.stress.max_principal
    return values


def write_solve_outputs(cfg: PipelineConfig, sr: SolveRun, out_dir, manifest: RunManifest):
    from ..exporters import VolumeMesh

    os.makedirs(out_dir, exist_ok=True)
    vm = wall_volume_mesh(sr.mesh.wall, sr.mesh.ilt)
    values = nodal_max_principal(sr)
    vm = VolumeMesh(vm.nodes, vm.blocks, vm.node_sets,
                    {"max_principal_stress_MPa": values,
                     "displacement_mm": sr.static.solution.displacements})
    paths = []
    if "vtk" in cfg.output.formats:
        p = os.path.join(out_dir, "stress.vtk")
        write_vtk(p, vm, "hexwall stress field")
        paths.append(p)
    stats = sr.static.stats.to_dict()
    stats["applied_pressure_kPa"] = sr.pressure_kpa
    stats["n_elements"] = int(len(sr.mesh.wall.hexes))
    p = os.path.join(out_dir, "stress_stats.json")
    write_json(p, stats)
    paths.append(p)
    p = os.path.join(out_dir, "solver_log.json")
    write_json(p, sr.static.solution.to_dict() | {"timings_s": sr.static.timings})
    paths.append(p)
    for p in paths:
        manifest.add_file(out_dir, p)
    return paths


# --------------------------------------------------------------------------
# convergence


@dataclass
class ConvergenceRow:
    n_layers: int
    element_size: float
    n_elements: int
    n_nodes: int
    peak: float
    p99: float
    time_s: float
    iterations: int
    curve: np.ndarray
    probe_values: list

    def table_row(self):
        return {
            "n_layers": self.n_layers,
            "element_size_mm": self.element_size,
            "n_elements": self.n_elements,
            "n_nodes": self.n_nodes,
            "peak_MPa": self.peak,
            "p99_MPa": self.p99,
            "time_s": self.time_s,
            "solver_iterations": self.iterations,
        }


@dataclass
class ConvergenceStudy:
    rows: list
    probes: np.ndarray

    def p99_relative_difference(self):
        a, b = self.rows[0].p99, self.rows[-1].p99
        return abs(a - b) / abs(b)

    def p99_monotone(self):
        d = np.diff([r.p99 for r in self.rows])
        return bool(np.all(d >= 0) or np.all(d <= 0))

    def curve_max_deviation(self, lo=1, hi=99):
        """Largest pointwise relative deviation of any curve from the finest, percentiles lo..hi."""
        ref = self.rows[-1].curve[lo:hi + 1]
        return max(float(np.max(np.abs(r.curve[lo:hi + 1] - ref) / np.abs(ref))) for r in self.rows)

    def probe_max_deviation(self):
        vals = np.array([[p.value for p in r.probe_values] for r in self.rows])
        ref = vals[-1]
        return float(np.max(np.abs(vals - ref) / np.abs(ref)))

    def to_dict(self):
        return {
            "table": [r.table_row() for r in self.rows],
            "p99_relative_difference_first_last": self.p99_relative_difference(),
            "p99_monotone": self.p99_monotone(),
            "percentile_curve_max_deviation": self.curve_max_deviation(),
            "probe_max_deviation": self.probe_max_deviation(),
            "probe_points": self.probes.tolist(),
            "probes": [[p.to_dict() for p in r.probe_values] for r in self.rows],
            "percentile_curves_MPa": {str(r.n_layers): r.curve.tolist() for r in self.rows},
        }


def run_convergence(cfg: PipelineConfig, layers=None, manifest=None, on_row=None) -> ConvergenceStudy:
    """Wall-only solves with ``n`` layers and element size thickness / n for each ``n``.

    Probe points default to nodes of the first mesh and stay fixed across
    meshes.  ``on_row`` is called after every completed model so partial
    results can be saved.
    """
    layers = list(layers or cfg.convergence.layers)
    manifest = manifest or RunManifest("convergence", config_to_dict(cfg))
    cfg = dataclasses.replace(cfg, ilt=dataclasses.replace(cfg.ilt, enabled=False))
    surfaces = load_surfaces(cfg)
    rows, probes = [], None
    for n in layers:
        size = cfg.mesh.wall_thickness / n
        params = cfg.mesh.params(n_layers=n, target_element_size=size, n_theta=0, n_axial=0)
        t0 = time.perf_counter()
        geo = prepare_geometry(cfg, params, surfaces)
        wall = build_wall(cfg, geo)
        report = quality_report(wall, None, cfg.quality.thresholds())
        quality_gate(report, cfg.quality.strict)
        mesh_run = MeshRun(geo, wall, None, report)
        if probes is None:
            probes = np.asarray(cfg.probes, dtype=np.float64) if cfg.probes else default_probe_points(wall)
        sr = run_solve(cfg, manifest, mesh_run=mesh_run, probes=probes)
        elapsed = time.perf_counter() - t0
        st = sr.static.stats
        row = ConvergenceRow(n, size, len(wall.hexes), wall.n_nodes, st.peak, st.p99, elapsed,
                             sr.static.solution.iterations, st.percentile_curve, st.probe_values)
        rows.append(row)
        manifest.timings[f"model_{n}_layers"] = elapsed
        log.info("%d layers: %d hexes, p99 %.4f MPa, %.1f s", n, row.n_elements, row.p99, elapsed)
        if on_row is not None:
            on_row(ConvergenceStudy(list(rows), probes))
        del sr, mesh_run, wall
    return ConvergenceStudy(rows, probes)
