"""Run configuration: schema, defaults, YAML round-trip, strict validation.

Every knob a run can turn lives in one RunConfig tree with explicit
defaults, so `dump_defaults()` is a complete, runnable starting file.
Loading is strict: unknown keys fail with their dotted path, values are
coerced to the field's type or rejected, and the schema version must
match.  Command-line overrides reuse the same validation by rebuilding
the tree from a patched dictionary.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import yaml

from .geometry import DeviceGeometry, MaterialGrid, build_grid
from .materials import (
    Dielectric,
    DrudeMetal,
    temperature_to_loss_factor,
)

CONFIG_VERSION = "1"

SWEEP_AXES = (
    "cavity_length",
    "emitter_depth",
    "emitter_x",
    "loss_factor",
    "temperature",
    "duty_cycle",
)


class ConfigError(ValueError):
    """Invalid configuration; path names the offending key."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


@dataclass
class MetalConfig:
    eps_inf: float = 1.0
    plasma_energy_ev: float = 8.8
    damping_energy_room_ev: float = 0.05
    loss_factor: float = 2000.0


@dataclass
class DielectricConfig:
    permittivity: float = 12.25


@dataclass
class MaterialsConfig:
    metal: MetalConfig = field(default_factory=MetalConfig)
    dielectric: DielectricConfig = field(default_factory=DielectricConfig)
    # when set, overrides metal.loss_factor through the resistivity table
    temperature_k: float | None = None


@dataclass
class GeometryConfig:
    period_nm: float = 116.0
    groove_width_nm: float = 20.0
    groove_depth_nm: float = 30.0
    metal_thickness_nm: float = 30.0
    cavity_length_nm: float = 328.0
    dbr_periods_per_side: int = 5
    substrate_height_nm: float = 600.0
    air_height_nm: float = 600.0
    slab_overhang_nm: float = 174.0
    side_margin_nm: float = 150.0
    pml_thickness_nm: float = 32.0


@dataclass
class FdtdConfig:
    dx_nm: float = 4.0
    dt_safety: float = 0.99
    # ring-down record length after the source window closes, in optical
    # periods of the source center frequency
    duration_periods: float = 300.0
    # survey record length used only to locate resonances before the
    # narrowband re-excitation
    locate_periods: float = 80.0
    # settling delay before the mode snapshot starts accumulating
    settle_periods: float = 40.0
    check_every: int = 1000


@dataclass
class SourceConfig:
    center_ev: float = 1.32
    # fractional amplitude-spectrum width of the broadband search pulse
    rel_bandwidth: float = 0.6
    # fractional width of the narrowband re-excitation pulse
    ring_rel_bandwidth: float = 0.01
    x_offset_nm: float = 37.0
    depth_nm: float = 20.0
    amplitude: float = 1.0


@dataclass
class MonitorsConfig:
    probe_depth_nm: float = 12.0
    cadence: int = 4
    flux_margin_cells: int = 2
    snapshot: bool = True


@dataclass
class EmitterConfig:
    dipole_moment: float = 1e-28
    gamma_bulk_ghz: float = 1.0
    gamma_nr_ghz: float = 0.0
    depth_nm: float = 20.0
    # None picks the intensity maximum at depth_nm from the mode snapshot
    x_offset_nm: float | None = None
    width_nm: float = 50.0


@dataclass
class SweepConfig:
    axis: str = "cavity_length"
    values: tuple = ()
    workers: int = 1
    output_dir: str = "runs"


@dataclass
class RunConfig:
    version: str = CONFIG_VERSION
    materials: MaterialsConfig = field(default_factory=MaterialsConfig)
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    fdtd: FdtdConfig = field(default_factory=FdtdConfig)
    source: SourceConfig = field(default_factory=SourceConfig)
    monitors: MonitorsConfig = field(default_factory=MonitorsConfig)
    emitter: EmitterConfig = field(default_factory=EmitterConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    # -- builders ---------------------------------------------------------

    def metal(self) -> DrudeMetal:
        m = self.materials.metal
        xi = m.loss_factor
        if self.materials.temperature_k is not None:
            xi = temperature_to_loss_factor(self.materials.temperature_k)
        return DrudeMetal(
            eps_inf=m.eps_inf,
            plasma_energy_ev=m.plasma_energy_ev,
            damping_energy_room_ev=m.damping_energy_room_ev,
            loss_factor=xi,
        )

    def dielectric(self) -> Dielectric:
        return Dielectric(permittivity=self.materials.dielectric.permittivity)

    def device(self) -> DeviceGeometry:
        return DeviceGeometry(**dataclasses.asdict(self.geometry))

    def grid(self) -> MaterialGrid:
        return build_grid(self.device(), self.fdtd.dx_nm)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["sweep"]["values"] = list(d["sweep"]["values"])
        return d


# -- strict construction --------------------------------------------------

_SUBSECTIONS = {
    ("MaterialsConfig", "metal"): MetalConfig,
    ("MaterialsConfig", "dielectric"): DielectricConfig,
    ("RunConfig", "materials"): MaterialsConfig,
    ("RunConfig", "geometry"): GeometryConfig,
    ("RunConfig", "fdtd"): FdtdConfig,
    ("RunConfig", "source"): SourceConfig,
    ("RunConfig", "monitors"): MonitorsConfig,
    ("RunConfig", "emitter"): EmitterConfig,
    ("RunConfig", "sweep"): SweepConfig,
}

# fields whose type cannot be inferred from their default value
_TYPE_OVERRIDES = {
    ("MaterialsConfig", "temperature_k"): "optional_float",
    ("EmitterConfig", "x_offset_nm"): "optional_float",
    ("SweepConfig", "values"): "float_list",
}


def _coerce_bool(value, path):
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.lower() in ("true", "false", "1", "0",
                                                    "yes", "no"):
        return value.lower() in ("true", "1", "yes")
    raise ConfigError(f"expected a boolean, got {value!r}", path)


def _coerce_int(value, path):
    if isinstance(value, bool):
        raise ConfigError(f"expected an integer, got {value!r}", path)
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(value, str):
        try:
            return int(value)
        except ValueError:
            pass
    raise ConfigError(f"expected an integer, got {value!r}", path)


def _coerce_float(value, path):
    if isinstance(value, bool):
        raise ConfigError(f"expected a number, got {value!r}", path)
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            pass
    raise ConfigError(f"expected a number, got {value!r}", path)


def _coerce_str(value, path):
    if isinstance(value, str):
        return value
    raise ConfigError(f"expected a string, got {value!r}", path)


def _coerce_optional_float(value, path):
    if value is None:
        return None
    if isinstance(value, str) and value.lower() in ("none", "null", ""):
        return None
    return _coerce_float(value, path)


def _coerce_float_list(value, path):
    if isinstance(value, str):
        value = [p for p in value.split(",") if p.strip()]
    if not isinstance(value, (list, tuple)):
        raise ConfigError(f"expected a list of numbers, got {value!r}", path)
    return tuple(_coerce_float(v, path) for v in value)


_COERCERS = {
    bool: _coerce_bool,
    int: _coerce_int,
    float: _coerce_float,
    str: _coerce_str,
    "optional_float": _coerce_optional_float,
    "float_list": _coerce_float_list,
}


def _build_section(cls, data, path):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"expected a mapping, got {data!r}", path)
    names = [f.name for f in dataclasses.fields(cls)]
    for key in data:
        if key not in names:
            where = f"{path}.{key}" if path else str(key)
            raise ConfigError("unknown key", where)
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        sub_path = f"{path}.{f.name}" if path else f.name
        sub_cls = _SUBSECTIONS.get((cls.__name__, f.name))
        if sub_cls is not None:
            kwargs[f.name] = _build_section(sub_cls, data[f.name], sub_path)
            continue
        kind = _TYPE_OVERRIDES.get((cls.__name__, f.name))
        if kind is None:
            default = f.default if f.default is not dataclasses.MISSING \
                else f.default_factory()
            kind = type(default)
        kwargs[f.name] = _COERCERS[kind](data[f.name], sub_path)
    return cls(**kwargs)


def from_dict(data: dict) -> RunConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"configuration root must be a mapping, "
                          f"got {data!r}")
    version = str(data.get("version", CONFIG_VERSION))
    if version != CONFIG_VERSION:
        raise ConfigError(
            f"unsupported schema version {version!r}, expected "
            f"{CONFIG_VERSION!r}", "version")
    body = dict(data)
    body["version"] = version
    cfg = _build_section(RunConfig, body, "")
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    if cfg.sweep.axis not in SWEEP_AXES:
        raise ConfigError(
            f"axis must be one of {', '.join(SWEEP_AXES)}; "
            f"got {cfg.sweep.axis!r}", "sweep.axis")
    if cfg.sweep.workers < 1:
        raise ConfigError("workers must be at least 1", "sweep.workers")
    if cfg.fdtd.dx_nm <= 0.0:
        raise ConfigError("dx_nm must be positive", "fdtd.dx_nm")
    if not 0.0 < cfg.fdtd.dt_safety <= 1.0:
        raise ConfigError("dt_safety must lie in (0, 1]", "fdtd.dt_safety")
    for name in ("duration_periods", "locate_periods", "settle_periods"):
        if getattr(cfg.fdtd, name) <= 0.0:
            raise ConfigError(f"{name} must be positive", f"fdtd.{name}")
    if cfg.source.center_ev <= 0.0:
        raise ConfigError("center_ev must be positive", "source.center_ev")
    for name in ("rel_bandwidth", "ring_rel_bandwidth"):
        if getattr(cfg.source, name) <= 0.0:
            raise ConfigError("bandwidth must be positive", f"source.{name}")
    if cfg.monitors.cadence < 1:
        raise ConfigError("cadence must be at least 1", "monitors.cadence")
    if cfg.emitter.width_nm <= 0.0:
        raise ConfigError("width_nm must be positive", "emitter.width_nm")


def loads(text: str) -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"not valid YAML: {exc}") from exc
    return from_dict(data)


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return loads(fh.read())


def dump(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False,
                          default_flow_style=False)


def dump_defaults() -> str:
    return dump(RunConfig())


def apply_overrides(cfg: RunConfig, pairs) -> RunConfig:
    """Rebuild cfg with dotted-path overrides, e.g.
    ("geometry.cavity-length-nm", "328").  Hyphens are interchangeable
    with underscores; values pass through the same coercion and
    validation as file input.
    """
    data = cfg.to_dict()
    for key, value in pairs:
        parts = [p.replace("-", "_") for p in key.split(".") if p]
        if not parts:
            raise ConfigError("empty override key", key)
        node = data
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ConfigError("unknown key", key.replace("-", "_"))
            node = node[part]
        if not isinstance(node, dict) or parts[-1] not in node:
            raise ConfigError("unknown key", key.replace("-", "_"))
        node[parts[-1]] = value
    return from_dict(data)
