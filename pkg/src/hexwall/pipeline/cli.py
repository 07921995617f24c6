"""``hexwall`` command line.

Exit codes
----------
0  success
1  unexpected internal error
2  bad command-line usage
3  invalid configuration or input value
4  geometry stage failed (STL parsing, slicing, centerline, profiles)
5  mesh stage failed (sweep overlap, wall self-intersection, ILT topology)
6  quality gate failed (scaled Jacobian, or any failure with --strict-quality)
7  solve stage failed (assembly, supports, convergence)

The thread count of the numerical libraries can be limited with the
``HEXWALL_THREADS`` environment variable.
"""

import argparse
import contextlib
import dataclasses
import logging
import os
import sys

import numpy as np

from .. import __version__
from ..errors import HexwallError
from .config import PipelineConfig, config_to_dict, dump_config, load_config

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE = 0, 1, 2
EXIT_CODES = {"config": 3, "geometry": 4, "mesh": 5, "quality": 6, "solve": 7}

log = logging.getLogger("hexwall")


def _threads():
    n = os.environ.get("HEXWALL_THREADS")
    if not n:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(n))


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML configuration file")
    common.add_argument("--out", help="output directory (overrides output.directory)")
    common.add_argument("-v", "--verbose", action="store_true")

    meshing = argparse.ArgumentParser(add_help=False)
    meshing.add_argument("--layers", type=int, help="hexahedral layers through the wall")
    meshing.add_argument("--with-ilt", action="store_true", help="fill the thrombus with tetrahedra")
    meshing.add_argument("--strict-quality", action="store_true",
                         help="fail on angle and skew failures too, not only on the Jacobian")
    meshing.add_argument("--seed", type=int, help="seed of the synthetic surface perturbations")

    p = argparse.ArgumentParser(prog="hexwall", description="Hexahedral vessel-wall meshing, quality audit and wall-stress analysis.",
                                epilog="exit codes: 0 ok, 1 internal, 2 usage, 3 config, 4 geometry, 5 mesh, 6 quality, 7 solve")
    p.add_argument("--version", action="version", version=f"hexwall {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="write synthetic wall and lumen STL files")
    s.add_argument("--seed", type=int)
    s.add_argument("--ascii", action="store_true", help="write ASCII instead of binary STL")

    sub.add_parser("mesh", parents=[common, meshing], help="mesh the wall (and ILT), audit quality, export")

    q = sub.add_parser("quality", parents=[common], help="audit VTK or INP meshes")
    q.add_argument("files", nargs="+")
    q.add_argument("--strict-quality", action="store_true")

    s = sub.add_parser("solve", parents=[common, meshing], help="mesh, solve and report wall stress")
    grp = s.add_mutually_exclusive_group()
    grp.add_argument("--pressure-kpa", type=float)
    grp.add_argument("--systolic", type=float, help="systolic pressure (mmHg); needs --diastolic")
    s.add_argument("--diastolic", type=float, help="diastolic pressure (mmHg)")

    c = sub.add_parser("convergence", parents=[common], help="layer-convergence study")
    c.add_argument("--layers", type=int, nargs="+")
    c.add_argument("--seed", type=int)

    sub.add_parser("config", parents=[common], help="print the effective configuration as YAML")
    return p


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if getattr(args, "out", None):
        cfg.output = dataclasses.replace(cfg.output, directory=args.out)
    if getattr(args, "seed", None) is not None:
        g = cfg.geometry
        cfg.geometry = dataclasses.replace(g, synthetic=dataclasses.replace(g.synthetic, seed=args.seed))
    layers = getattr(args, "layers", None)
    if isinstance(layers, int):
        cfg.mesh = dataclasses.replace(cfg.mesh, n_layers=layers)
    elif layers:
        cfg.convergence = dataclasses.replace(cfg.convergence, layers=tuple(layers))
    if getattr(args, "with_ilt", False):
        cfg.ilt = dataclasses.replace(cfg.ilt, enabled=True)
    if getattr(args, "strict_quality", False):
        cfg.quality = dataclasses.replace(cfg.quality, strict=True)
    from ..fem.materials import PressureSpec

    if getattr(args, "pressure_kpa", None) is not None:
        cfg.pressure = PressureSpec(pressure_kpa=args.pressure_kpa)
    elif getattr(args, "systolic", None) is not None or getattr(args, "diastolic", None) is not None:
        cfg.pressure = PressureSpec(systolic_mmhg=args.systolic, diastolic_mmhg=args.diastolic)
    return cfg.validate()


def _finish(manifest, out, paths):
    for p in paths:
        manifest.add_file(out, p)
    m = manifest.write(out)
    print(f"wrote {len(manifest.files)} files to {out} (manifest: {m})")


def cmd_synth(cfg, args):
    from ..geometry import synth_aaa
    from .stages import RunManifest

    out = cfg.output.directory
    os.makedirs(out, exist_ok=True)
    manifest = RunManifest("synth", config_to_dict(cfg))
    with manifest.time("synth"):
        wall, lumen = synth_aaa(cfg.geometry.synthetic)
    paths = []
    for name, surf in (("wall.stl", wall), ("lumen.stl", lumen)):
        p = os.path.join(out, name)
        surf.write(p, binary=not args.ascii)
        paths.append(p)
    spec = cfg.geometry.synthetic
    print(f"synthetic AAA: length {spec.length:g} mm, max diameter {spec.max_diameter():g} mm, "
          f"{len(wall.triangles)} wall triangles")
    _finish(manifest, out, paths)


def _print_quality(report):
    print(report.table())
    for name, s in report.summary().items():
        print(f"{name}: {s['failed_angle_percent']:.3f}% of {s['n_elements']} elements outside the angle range")


def cmd_mesh(cfg, args):
    from .report import write_quality_report
    from .stages import RunManifest, run_mesh, write_mesh_outputs

    out = cfg.output.directory
    manifest = RunManifest("mesh", config_to_dict(cfg))
    run = run_mesh(cfg, manifest, gate=False)
    os.makedirs(out, exist_ok=True)
    paths = write_mesh_outputs(cfg, run, out, manifest)
    paths += write_quality_report(run.quality, out)
    _print_quality(run.quality)
    if run.conformity is not None:
        c = run.conformity
        print(f"interface: max node distance {c.max_distance:.3g} mm, "
              f"{c.tris_per_quad_min}-{c.tris_per_quad_max} triangles per wall quad, {c.n_pyramids} pyramids")
    from .stages import quality_gate

    try:
        quality_gate(run.quality, cfg.quality.strict)
    finally:
        _finish(manifest, out, paths)


def cmd_quality(cfg, args):
    from ..exporters import read_mesh, write_json
    from ..quality import QualityReport, assess_hexes, assess_tets
    from ..topology import VTK_HEXAHEDRON, VTK_QUADRATIC_HEXAHEDRON, VTK_QUADRATIC_TETRA, VTK_TETRA
    from .report import write_quality_report
    from .stages import quality_gate

    th = cfg.quality.thresholds()
    parts = []
    for f in args.files:
        vm = read_mesh(f)
        stem = os.path.splitext(os.path.basename(f))[0]
        hexes = [b.cells[:, :8] for b in vm.blocks if b.cell_type in (VTK_HEXAHEDRON, VTK_QUADRATIC_HEXAHEDRON)]
        tets = [b.cells[:, :4] for b in vm.blocks if b.cell_type in (VTK_TETRA, VTK_QUADRATIC_TETRA)]
        multi = len(args.files) > 1
        if hexes:
            parts.append(assess_hexes(f"{stem}:wall" if multi else "wall", vm.nodes, np.vstack(hexes), th))
        if tets:
            parts.append(assess_tets(f"{stem}:ilt" if multi else "ilt", vm.nodes, np.vstack(tets), th))
    report = QualityReport(parts, th)
    out = cfg.output.directory
    os.makedirs(out, exist_ok=True)
    p = os.path.join(out, "quality.json")
    write_json(p, report.to_dict())
    write_quality_report(report, out)
    _print_quality(report)
    quality_gate(report, cfg.quality.strict)


def cmd_solve(cfg, args):
    from .report import write_quality_report, write_stress_report
    from .stages import RunManifest, run_solve, write_mesh_outputs, write_solve_outputs

    out = cfg.output.directory
    manifest = RunManifest("solve", config_to_dict(cfg))
    sr = run_solve(cfg, manifest)
    os.makedirs(out, exist_ok=True)
    paths = write_mesh_outputs(cfg, sr.mesh, out, manifest)
    paths += write_solve_outputs(cfg, sr, out, manifest)
    paths += write_quality_report(sr.mesh.quality, out)
    paths += write_stress_report(sr.static.stats, out)
    st, sol = sr.static.stats, sr.static.solution
    print(f"applied pressure {sr.pressure_kpa:.4g} kPa on {'lumen' if sr.mesh.ilt is not None else 'inner wall'}")
    print(f"{len(sr.mesh.wall.hexes)} hexahedra, {sr.static.model.n_nodes} nodes, "
          f"solver {sol.method}: {sol.iterations} iterations, residual {sol.residual:.2e}, "
          f"{sum(sr.static.timings.values()):.1f} s")
    print(f"max principal stress: peak {st.peak:.4f} MPa, 99th percentile {st.p99:.4f} MPa")
    _finish(manifest, out, paths)


def cmd_convergence(cfg, args):
    from .report import write_convergence_report
    from .stages import RunManifest, run_convergence

    out = cfg.output.directory
    os.makedirs(out, exist_ok=True)
    manifest = RunManifest("convergence", config_to_dict(cfg))

    def save_partial(study):
        write_convergence_report(study, out, plots=False)

    study = run_convergence(cfg, manifest=manifest, on_row=save_partial)
    paths = write_convergence_report(study, out)
    print(f"{'layers':>6} {'size':>6} {'elements':>9} {'nodes':>9} {'peak':>8} {'p99':>8} {'time(s)':>8}")
    for r in study.rows:
        print(f"{r.n_layers:>6} {r.element_size:>6.3f} {r.n_elements:>9,} {r.n_nodes:>9,} "
              f"{r.peak:>8.4f} {r.p99:>8.4f} {r.time_s:>8.1f}")
    print(f"p99 difference first/last: {100 * study.p99_relative_difference():.2f}%, "
          f"curve deviation (1-99): {100 * study.curve_max_deviation():.2f}%, "
          f"probe deviation: {100 * study.probe_max_deviation():.2f}%")
    _finish(manifest, out, paths)


def cmd_config(cfg, args):
    sys.stdout.write(dump_config(cfg))


COMMANDS = {
    "synth": cmd_synth,
    "mesh": cmd_mesh,
    "quality": cmd_quality,
    "solve": cmd_solve,
    "convergence": cmd_convergence,
    "config": cmd_config,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "systolic", None) is not None and getattr(args, "diastolic", None) is None:
            parser.error("--systolic needs --diastolic")
        cfg = _config(args)
        with _threads():
            COMMANDS[args.command](cfg, args)
    except HexwallError as e:
        print(f"error [{e.stage}]: {e}", file=sys.stderr)
        return EXIT_CODES.get(e.stage, EXIT_INTERNAL)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
