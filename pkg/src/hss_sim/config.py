"""INI configuration for runs and trace profiles.

Run config sections (all optional)::

    [hss]                 preset = perf_opt, fast_fraction = 0.1
    [devices.N]           one per device, N = 0 (fastest) .. ; either
                          ``class = H|M|L_SSD|L|PMEM`` plus overrides, or every
                          DeviceSpec field. ``capacity_pages`` may be left out,
                          in which case it is scaled from the trace footprint.
    [agents.placement]    Hyperparameters fields
    [agents.migration]    Hyperparameters fields
    [engine]              Knobs fields

Unknown sections and keys are errors.
"""
from __future__ import annotations

import configparser
import dataclasses
import types
import typing
from dataclasses import dataclass, field

from .devices import (DEFAULT_FOOTPRINT, DEVICE_CLASSES, PRESETS, DeviceSpec, HssConfig, preset,
                      scaled_capacities)
from .engine import Knobs
from .rl import MIGRATION_HP, PLACEMENT_HP, Hyperparameters
from .trace_io import TraceProfile, parse_size_distribution


class ConfigError(ValueError):
    pass


def _field_types(cls) -> dict[str, type]:
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in dataclasses.fields(cls)}


def _convert(raw: str, tp, where: str):
    raw = raw.strip()
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if raw.lower() in ("", "none"):
            return None
        tp = args[0]
    try:
        if tp is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if tp is int:
            return int(raw)
        if tp is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {tp.__name__}") from None


def parse_value(cls, key: str, raw: str, where: str):
    types_ = _field_types(cls)
    if key not in types_:
        raise ConfigError(f"{where}: unknown key {key!r}; valid keys: {', '.join(types_)}")
    return _convert(raw, types_[key], f"{where}.{key}")


def _section_values(cls, section, where: str, skip=()) -> dict:
    return {k: parse_value(cls, k, v, where) for k, v in section.items() if k not in skip}


@dataclass
class SimConfig:
    preset: str = "perf_opt"
    fast_fraction: float = 0.1
    devices: list[dict] = field(default_factory=list)
    placement_hp: Hyperparameters = PLACEMENT_HP
    migration_hp: Hyperparameters = MIGRATION_HP
    knobs: Knobs = field(default_factory=Knobs)

    def build_hss(self, footprint_pages: int = DEFAULT_FOOTPRINT) -> HssConfig:
        fp = max(1, footprint_pages)
        if not self.devices:
            return preset(self.preset, fp, self.fast_fraction)
        caps = scaled_capacities(len(self.devices), fp, self.fast_fraction)
        specs = []
        for i, d in enumerate(self.devices):
            d = dict(d)
            if d.get("capacity_pages") is None:
                d["capacity_pages"] = caps[i]
            specs.append(DeviceSpec(**d))
        return HssConfig(tuple(specs))


def _device_entry(section, where: str) -> dict:
    values = dict(section)
    base = {}
    cls_name = values.pop("class", None)
    if cls_name is not None:
        if cls_name not in DEVICE_CLASSES:
            raise ConfigError(f"{where}.class: unknown device class {cls_name!r}; "
                              f"valid: {', '.join(DEVICE_CLASSES)}")
        base = dataclasses.asdict(DEVICE_CLASSES[cls_name])
        base["capacity_pages"] = None
    for k, v in values.items():
        base[k] = parse_value(DeviceSpec, k, v, where)
    missing = [f.name for f in dataclasses.fields(DeviceSpec)
               if f.name not in base and f.default is dataclasses.MISSING
               and f.name != "capacity_pages"]
    if missing:
        raise ConfigError(f"{where}: missing keys {', '.join(missing)}")
    base.setdefault("capacity_pages", None)
    return base


def parse_config(text: str, source: str = "<config>") -> SimConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(f"{source}: {e}") from None
    cfg = SimConfig()
    devices: dict[int, dict] = {}
    for name in cp.sections():
        sec = cp[name]
        where = f"{source}[{name}]"
        if name == "hss":
            for k, v in sec.items():
                if k == "preset":
                    if v not in PRESETS:
                        raise ConfigError(f"{where}.preset: unknown preset {v!r}")
                    cfg.preset = v
                elif k == "fast_fraction":
                    cfg.fast_fraction = _convert(v, float, f"{where}.{k}")
                else:
                    raise ConfigError(f"{where}: unknown key {k!r}; valid keys: preset, fast_fraction")
        elif name.startswith("devices."):
            try:
                idx = int(name.split(".", 1)[1])
            except ValueError:
                raise ConfigError(f"{where}: device sections are named devices.N") from None
            devices[idx] = _device_entry(sec, where)
        elif name == "agents.placement":
            cfg.placement_hp = dataclasses.replace(PLACEMENT_HP, **_section_values(Hyperparameters, sec, where))
        elif name == "agents.migration":
            cfg.migration_hp = dataclasses.replace(MIGRATION_HP, **_section_values(Hyperparameters, sec, where))
        elif name == "engine":
            cfg.knobs = Knobs(**_section_values(Knobs, sec, where))
        else:
            raise ConfigError(f"{where}: unknown section; valid: hss, devices.N, "
                              f"agents.placement, agents.migration, engine")
    if devices:
        if sorted(devices) != list(range(len(devices))):
            raise ConfigError(f"{source}: device sections must be numbered 0..{len(devices) - 1}")
        cfg.devices = [devices[i] for i in range(len(devices))]
    return cfg


def load_config(path) -> SimConfig:
    with open(path) as fh:
        return parse_config(fh.read(), source=str(path))


def parse_profile(text: str, source: str = "<profile>") -> TraceProfile:
    """``[profile]`` section with TraceProfile fields; sizes as ``1:0.5,8:0.5``."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(f"{source}: {e}") from None
    extra = [s for s in cp.sections() if s != "profile"]
    if extra or "profile" not in cp:
        raise ConfigError(f"{source}: expected exactly one [profile] section")
    values = {}
    for k, v in cp["profile"].items():
        if k == "request_size_distribution":
            try:
                values[k] = parse_size_distribution(v)
            except ValueError:
                raise ConfigError(f"{source}: bad request_size_distribution {v!r}") from None
        else:
            values[k] = parse_value(TraceProfile, k, v, f"{source}[profile]")
    try:
        return TraceProfile(**values)
    except TypeError as e:
        raise ConfigError(f"{source}: {e}") from None


def load_profile(path) -> TraceProfile:
    with open(path) as fh:
        return parse_profile(fh.read(), source=str(path))
