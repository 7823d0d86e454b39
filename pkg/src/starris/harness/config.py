"""Scenario configuration: nested dataclasses, TOML loading and presets."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..scene import AreaBounds, ConfigurationError


@dataclass
class GeometryConfig:
    x_min: float = 0.0
    x_max: float = 50.0
    y_min: float = -25.0
    y_max: float = 25.0
    bs_height: float = 12.0
    ris_position: tuple = (50.0, 0.0, 6.0)
    bs_array: tuple = (16, 16)
    ris_array: tuple = (16, 16)
    n_rf_bs: int = 32
    n_rf_ris: int = 5
    carrier_hz: float = 30e9
    sample_period: float = 1e-8

    @property
    def area(self) -> AreaBounds:
        return AreaBounds(self.x_min, self.x_max, self.y_min, self.y_max)

    @property
    def p_b(self):
        return (0.0, 0.0, self.bs_height)


@dataclass
class TargetsConfig:
    """Initial dynamic scatterers.

    ``initial`` lists explicit ``{position, velocity, rcs}`` tables; when it
    is empty, ``count`` targets are drawn with speeds in
    ``[speed_min, speed_max]`` on straight tracks that stay inside the area
    (inset by ``margin``) for the whole run.
    """

    count: int = 3
    speed_min: float = 1.0
    speed_max: float = 3.0
    rcs: float = 5.0
    margin: float = 4.0
    sigma_v: float = 0.01
    initial: list = field(default_factory=list)


@dataclass
class EventsConfig:
    births: list = field(default_factory=list)
    spawns: list = field(default_factory=list)
    exits: list = field(default_factory=list)


@dataclass
class SensingConfig:
    sigma_ang_deg: float = 0.001
    p_detect: float = 0.98
    clutter_mean: float = 0.0
    doppler_noise_hz: float = 0.0
    doppler_gate_sigmas: float = 3.0


@dataclass
class FilterConfig:
    p_survive: float = 0.99
    p_detect: float = 0.98
    sigma_v: float = 6.0
    meas_inflation_deg: float = 0.1
    birth_weight: float = 0.03
    birth_var: float = 25.0
    birth_inset: float = 2.0
    spawn_weight: float = 0.05
    adaptive_birth: bool = True
    init_weight: float = 0.6
    prune_threshold: float = 1e-5
    merge_threshold: float = 4.0
    extract_threshold: float = 0.5
    max_components: int = 100


@dataclass
class StaticConfig:
    position: tuple = (20.0, 15.0, 0.0)
    rcs: float = 10.0


def _default_statics():
    return [StaticConfig((20.0, 15.0, 0.0), 1.0), StaticConfig((35.0, -15.0, 0.0), 2.0)]


@dataclass
class ChannelConfig:
    noise_var: float = 1e-10
    indoor_aod_deg: tuple = (120.0, 20.0)
    indoor_delay: float = 2e-8
    indoor_variance: float = 1.0
    n_training: int = 64
    n_data: int = 128
    tau_max: float = 5e-7
    statics: list = field(default_factory=_default_statics)


@dataclass
class BeamConfig:
    collision_deg: float = 1.0
    mismatch_ratio: float = 0.5
    mismatch_warmup: int = 3
    scan_window: float = 0.125
    gate_m: float = 10.0


@dataclass
class ScenarioConfig:
    name: str = "default"
    periods: int = 25
    dt: float = 0.5
    seed: int = 0
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    targets: TargetsConfig = field(default_factory=TargetsConfig)
    events: EventsConfig = field(default_factory=EventsConfig)
    sensing: SensingConfig = field(default_factory=SensingConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    beam: BeamConfig = field(default_factory=BeamConfig)

    def validate(self) -> "ScenarioConfig":
        errors = _validate(self)
        if errors:
            raise ConfigurationError("invalid configuration:\n  " + "\n  ".join(errors))
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, default=list)
        return hashlib.sha256(text.encode()).hexdigest()

    def with_overrides(self, **paths) -> "ScenarioConfig":
        """Copy with dotted-path overrides, e.g. ``sensing__sigma_ang_deg=0.1``."""
        d = self.to_dict()
        for key, value in paths.items():
            node = d
            parts = key.split("__")
            for p in parts[:-1]:
                node = node[p]
            if parts[-1] not in node:
                raise ConfigurationError(f"unknown field {'.'.join(parts)}")
            old = node[parts[-1]]
            if isinstance(old, int) and not isinstance(old, bool) and isinstance(value, float) and value.is_integer():
                value = int(value)
            node[parts[-1]] = value
        return from_dict(d)


_POSITIVE = {
    "periods", "dt",
    "geometry.bs_height", "geometry.n_rf_bs", "geometry.n_rf_ris", "geometry.carrier_hz",
    "geometry.sample_period",
    "targets.speed_max", "targets.rcs",
    "sensing.doppler_gate_sigmas",
    "filter.sigma_v", "filter.birth_var", "filter.prune_threshold", "filter.merge_threshold",
    "filter.extract_threshold", "filter.max_components", "filter.init_weight",
    "channel.noise_var", "channel.n_training", "channel.n_data", "channel.tau_max",
    "beam.collision_deg", "beam.mismatch_ratio", "beam.scan_window", "beam.gate_m",
}
_NON_NEGATIVE = {
    "targets.count", "targets.speed_min", "targets.margin", "targets.sigma_v",
    "sensing.sigma_ang_deg", "sensing.clutter_mean", "sensing.doppler_noise_hz",
    "filter.birth_weight", "filter.spawn_weight", "filter.birth_inset", "filter.meas_inflation_deg",
    "channel.indoor_delay", "channel.indoor_variance", "beam.mismatch_warmup",
}
_PROBABILITY = {"sensing.p_detect", "filter.p_survive", "filter.p_detect"}


def _get(cfg, path):
    for p in path.split("."):
        cfg = getattr(cfg, p)
    return cfg


def _validate(cfg: ScenarioConfig) -> list[str]:
    errs = []
    for path in sorted(_POSITIVE):
        v = _get(cfg, path)
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            errs.append(f"{path}: must be positive, got {v!r}")
    for path in sorted(_NON_NEGATIVE):
        v = _get(cfg, path)
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
            errs.append(f"{path}: must be non-negative, got {v!r}")
    for path in sorted(_PROBABILITY):
        v = _get(cfg, path)
        if not (isinstance(v, (int, float)) and 0 <= v <= 1):
            errs.append(f"{path}: must lie in [0, 1], got {v!r}")
    g = cfg.geometry
    if not (g.x_max > g.x_min and g.y_max > g.y_min):
        errs.append("geometry: area bounds are empty")
    for name in ("bs_array", "ris_array"):
        a = getattr(g, name)
        if len(a) != 2 or any(int(n) < 1 for n in a):
            errs.append(f"geometry.{name}: need two positive sizes, got {a!r}")
    if len(g.ris_position) != 3:
        errs.append("geometry.ris_position: need three coordinates")
    if g.n_rf_ris < 2:
        errs.append("geometry.n_rf_ris: need at least 2 RF chains")
    if len(g.bs_array) == 2 and g.n_rf_bs > 0 and (int(g.bs_array[0]) * int(g.bs_array[1])) % g.n_rf_bs:
        errs.append("geometry.n_rf_bs: must divide the BS element count")
    if cfg.targets.speed_min > cfg.targets.speed_max:
        errs.append("targets.speed_min: exceeds targets.speed_max")
    if cfg.channel.n_training < cfg.channel.tau_max / g.sample_period:
        errs.append("channel.n_training: shorter than the maximum delay spread")
    for i, t in enumerate(cfg.targets.initial):
        for key in ("position", "velocity"):
            if key not in t or len(t[key]) != 2:
                errs.append(f"targets.initial[{i}].{key}: need two coordinates")
    for kind, keys in (("births", ("k", "position", "velocity")), ("spawns", ("k", "parent", "offset")),
                       ("exits", ("k", "target"))):
        for i, e in enumerate(getattr(cfg.events, kind)):
            for key in keys:
                if key not in e:
                    errs.append(f"events.{kind}[{i}].{key}: missing")
            # events after the last period are allowed and never fire
            if "k" in e and not (isinstance(e["k"], int) and e["k"] >= 2):
                errs.append(f"events.{kind}[{i}].k: must be an integer >= 2")
    for i, s in enumerate(cfg.channel.statics):
        if len(s.position) != 3 or not s.rcs > 0:
            errs.append(f"channel.statics[{i}]: need a 3-D position and positive rcs")
    return errs


def _build(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path or 'config'}: expected a table")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigurationError("unknown field(s): " + ", ".join(where + u for u in unknown))
    kwargs = {}
    for key, value in data.items():
        sub = f"{path}.{key}" if path else key
        default = names[key].default_factory() if names[key].default_factory is not dataclasses.MISSING \
            else names[key].default
        if dataclasses.is_dataclass(default):
            kwargs[key] = _build(type(default), value, sub)
        elif key == "statics":
            kwargs[key] = [_build(StaticConfig, s, f"{sub}[{i}]") for i, s in enumerate(value)]
        elif isinstance(default, tuple):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    return cls(**kwargs)


def from_dict(data: dict) -> ScenarioConfig:
    return _build(ScenarioConfig, data, "")


def load_config(path) -> ScenarioConfig:
    """Read a TOML scenario file; a ``preset`` key starts from a named preset."""
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    preset = data.pop("preset", None)
    if preset is None:
        return from_dict(data).validate()
    base = get_preset(preset).to_dict()
    _deep_update(base, data)
    return from_dict(base).validate()


def _deep_update(base: dict, new: dict) -> None:
    for k, v in new.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _deep_update(base[k], v)
        else:
            base[k] = v


def preset_tracking() -> ScenarioConfig:
    """Three targets moving through the area, fine angle noise, every path sensed."""
    cfg = ScenarioConfig(name="tracking")
    cfg.sensing.p_detect = 1.0
    return cfg


def preset_cardinality() -> ScenarioConfig:
    """Two targets; a spawn at k=5, an exit at k=12 and an entrant at k=17."""
    cfg = ScenarioConfig(name="cardinality")
    cfg.targets.count = 2
    cfg.events = EventsConfig(
        births=[{"k": 17, "position": [25.0, -23.0], "velocity": [0.0, 1.5], "rcs": 5.0}],
        spawns=[{"k": 5, "parent": 0, "offset": [2.0, 0.0], "rcs": 0.5}],
        exits=[{"k": 12, "target": 1}],
    )
    return cfg


PRESETS = {"default": ScenarioConfig, "tracking": preset_tracking, "cardinality": preset_cardinality}


def get_preset(name: str) -> ScenarioConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def write_toml(cfg: ScenarioConfig, path) -> None:
    """Minimal TOML writer for the config tree (scalars, arrays, tables)."""
    def val(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, str):
            return json.dumps(v)
        if isinstance(v, (list, tuple)):
            return "[" + ", ".join(val(x) for x in v) + "]"
        if isinstance(v, dict):
            return "{ " + ", ".join(f"{k} = {val(x)}" for k, x in v.items()) + " }"
        return repr(float(v)) if isinstance(v, float) else str(v)

    d = cfg.to_dict()
    lines = [f"{k} = {val(v)}" for k, v in d.items() if not isinstance(v, dict)]
    for k, v in d.items():
        if isinstance(v, dict):
            lines.append(f"\n[{k}]")
            lines += [f"{kk} = {val(vv)}" for kk, vv in v.items()]
    Path(path).write_text("\n".join(lines) + "\n")
