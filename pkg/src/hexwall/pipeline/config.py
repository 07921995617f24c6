"""Run configuration: a YAML document mapped onto nested dataclasses.

Top-level keys (all optional; defaults shown by ``hexwall config``
or :func:`default_config_dict`)::

    geometry:   source (synthetic | stl), wall_stl, lumen_stl, synthetic {...},
                axis_hint, profile_smoothing
    mesh:       wall_thickness, n_layers, target_element_size, n_theta, n_axial,
                smoothing_iterations
    ilt:        enabled, element_size, n_radial
    quality:    jacobian_min, quad_angle_range, tri_angle_range, skew_max, strict
    material:   youngs_modulus, poisson_ratio, ilt_stiffness_ratio, ilt_poisson_ratio
    pressure:   pressure_kpa | systolic_mmhg + diastolic_mmhg
    supports:   fixed_sets, components
    solver:     method, rtol, max_iterations
    output:     directory, formats, quadratic
    probes:     list of [x, y, z] points (empty: automatic mid-bulge points)
    convergence: layers
"""

import copy
import dataclasses
import os
from dataclasses import dataclass, field
from typing import Optional

import yaml

from ..errors import InvalidSpecError
from ..fem.materials import BCSpec, MaterialSpec, PressureSpec
from ..geometry import SyntheticAAASpec
from ..hexmesher import MeshParams
from ..quality import QualityThresholds

FORMATS = ("vtk", "inp", "json")


@dataclass
class GeometryConfig:
    source: str = "synthetic"
    wall_stl: Optional[str] = None
    lumen_stl: Optional[str] = None
    synthetic: SyntheticAAASpec = field(default_factory=SyntheticAAASpec)
    axis_hint: tuple = (0.0, 0.0, 1.0)
    profile_smoothing: int = 0


@dataclass
class MeshConfig:
    wall_thickness: float = 1.5
    n_layers: int = 2
    target_element_size: float = 0.75
    n_theta: int = 0
    n_axial: int = 0
    smoothing_iterations: int = 0

    def params(self, **overrides):
        kw = dict(wall_thickness=self.wall_thickness, n_layers=self.n_layers,
                  target_element_size=self.target_element_size, n_theta=self.n_theta,
                  n_axial=self.n_axial)
        kw.update(overrides)
        return MeshParams(**kw)


@dataclass
class IltConfig:
    enabled: bool = False
    element_size: float = 1.5
    n_radial: int = 0


@dataclass
class QualityConfig:
    jacobian_min: float = 0.6
    quad_angle_range: tuple = (45.0, 135.0)
    tri_angle_range: tuple = (30.0, 120.0)
    skew_max: float = 0.95
    strict: bool = False

    def thresholds(self):
        return QualityThresholds(self.jacobian_min, tuple(self.quad_angle_range),
                                 tuple(self.tri_angle_range), self.skew_max)


@dataclass
class MaterialConfig:
    youngs_modulus: float = 3.0
    poisson_ratio: float = 0.49
    ilt_stiffness_ratio: float = 20.0
    ilt_poisson_ratio: float = 0.45

    def materials(self):
        return {
            "wall": MaterialSpec(self.youngs_modulus, self.poisson_ratio),
            "ilt": MaterialSpec(self.youngs_modulus / self.ilt_stiffness_ratio, self.ilt_poisson_ratio),
        }


@dataclass
class SolverConfig:
    method: str = "auto"
    rtol: float = 1e-10
    max_iterations: int = 2000


@dataclass
class OutputConfig:
    directory: str = "hexwall_out"
    formats: tuple = FORMATS
    quadratic: bool = False


@dataclass
class ConvergenceConfig:
    layers: tuple = (2, 3, 4)


@dataclass
class PipelineConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    mesh: MeshConfig = field(default_factory=MeshConfig)
    ilt: IltConfig = field(default_factory=IltConfig)
    quality: QualityConfig = field(default_factory=QualityConfig)
    material: MaterialConfig = field(default_factory=MaterialConfig)
    pressure: PressureSpec = field(default_factory=lambda: PressureSpec(pressure_kpa=12.0))
    supports: BCSpec = field(default_factory=BCSpec)
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    probes: list = field(default_factory=list)
    convergence: ConvergenceConfig = field(default_factory=ConvergenceConfig)

    def validate(self, check_paths=True):
        g = self.geometry
        if g.source not in ("synthetic", "stl"):
            raise InvalidSpecError("geometry.source must be 'synthetic' or 'stl'")
        if g.source == "stl":
            if not g.wall_stl:
                raise InvalidSpecError("geometry.wall_stl is required when source is 'stl'")
            if self.ilt.enabled and not g.lumen_stl:
                raise InvalidSpecError("geometry.lumen_stl is required when ilt.enabled")
            if check_paths:
                for p in (g.wall_stl, g.lumen_stl if self.ilt.enabled else None):
                    if p and not os.path.exists(p):
                        raise InvalidSpecError(f"file not found: {p}")
        else:
            g.synthetic.validate()
        if g.profile_smoothing < 0 or self.mesh.smoothing_iterations < 0:
            raise InvalidSpecError("smoothing iteration counts must be >= 0")
        self.mesh.params().validate()
        if self.ilt.element_size <= 0 or self.ilt.n_radial < 0:
            raise InvalidSpecError("ilt.element_size must be > 0 and ilt.n_radial >= 0")
        self.quality.thresholds().validate()
        for m in self.material.materials().values():
            m.validate()
        if self.material.ilt_stiffness_ratio <= 0:
            raise InvalidSpecError("material.ilt_stiffness_ratio must be > 0")
        self.pressure.validate()
        self.supports.validate()
        if self.solver.method not in ("auto", "direct", "pcg", "cg"):
            raise InvalidSpecError("solver.method must be auto, direct, pcg or cg")
        if not 0 < self.solver.rtol <= 1e-8:
            raise InvalidSpecError("solver.rtol must lie in (0, 1e-8]")
        bad = set(self.output.formats) - set(FORMATS)
        if bad:
            raise InvalidSpecError(f"unknown output formats {sorted(bad)}; choose from {FORMATS}")
        for p in self.probes:
            if len(p) != 3:
                raise InvalidSpecError("probes must be [x, y, z] points")
        if len(self.convergence.layers) < 2 or min(self.convergence.layers) < 1:
            raise InvalidSpecError("convergence.layers needs at least two positive layer counts")
        return self


# --------------------------------------------------------------------------
# dict / YAML mapping


def _from_dict(cls, data, where):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise InvalidSpecError(f"{where} must be a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise InvalidSpecError(f"unknown keys in {where}: {sorted(unknown)}")
    defaults = cls()
    kw = {}
    for name, value in data.items():
        default = getattr(defaults, name)
        if dataclasses.is_dataclass(default):
            kw[name] = _from_dict(type(default), value, f"{where}.{name}")
        elif isinstance(default, tuple) and isinstance(value, list):
            kw[name] = tuple(value)
        else:
            kw[name] = value
    try:
        return cls(**kw)
    except TypeError as e:
        raise InvalidSpecError(f"{where}: {e}") from e


def config_from_dict(data) -> PipelineConfig:
    data = copy.deepcopy(data or {})
    pressure = data.pop("pressure", None)
    cfg = _from_dict(PipelineConfig, data, "config")
    if pressure is not None:
        cfg.pressure = _from_dict(PressureSpec, pressure, "pressure")
    return cfg


def _plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_plain(x) for x in obj]
    return obj


def config_to_dict(cfg: PipelineConfig):
    return _plain(cfg)


def default_config_dict():
    return config_to_dict(PipelineConfig())


def load_config(path) -> PipelineConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError as e:
        raise InvalidSpecError(f"config file not found: {path}") from e
    except yaml.YAMLError as e:
        raise InvalidSpecError(f"config file {path} is not valid YAML: {e}") from e
    cfg = config_from_dict(data)
    # relative STL paths are taken relative to the config file
    base = os.path.dirname(os.path.abspath(path))
    for attr in ("wall_stl", "lumen_stl"):
        p = getattr(cfg.geometry, attr)
        if p and not os.path.isabs(p):
            setattr(cfg.geometry, attr, os.path.join(base, p))
    return cfg


def dump_config(cfg: PipelineConfig):
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)
