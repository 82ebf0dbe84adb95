"""Storage device latency model and hybrid-storage presets.

Every device has one service channel: requests queue FIFO behind
``busy_until_us``. Service time is a fixed setup latency plus transfer time at
the sustained bandwidth, floored by the device's random-IOPS rating.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .trace_io import PAGE_SIZE, Op

BYTES_PER_US_PER_MBPS = 1024 * 1024 / 1e6
MAX_DEVICES = 16


@dataclass(frozen=True)
class DeviceSpec:
    name: str
    capacity_pages: int
    read_base_us: float
    write_base_us: float
    read_bw_mbps: float
    write_bw_mbps: float
    max_iops: float | None = None
    # Falls back to max_iops; SATA flash has very asymmetric random IOPS.
    write_max_iops: float | None = None

    def __post_init__(self):
        if self.capacity_pages < 1:
            raise ValueError(f"{self.name}: capacity_pages must be >= 1")
        if self.read_bw_mbps <= 0 or self.write_bw_mbps <= 0:
            raise ValueError(f"{self.name}: bandwidths must be positive")
        if self.read_base_us < 0 or self.write_base_us < 0:
            raise ValueError(f"{self.name}: base latencies must be non-negative")
        for v in (self.max_iops, self.write_max_iops):
            if v is not None and v <= 0:
                raise ValueError(f"{self.name}: IOPS limits must be positive")

    def with_capacity(self, pages: int) -> "DeviceSpec":
        return replace(self, capacity_pages=int(pages))


def service_time(spec: DeviceSpec, op: Op, size_pages: int) -> float:
    """Microseconds to service one request of ``size_pages`` on an idle device."""
    if op == Op.WRITE:
        base, bw = spec.write_base_us, spec.write_bw_mbps
        iops = spec.write_max_iops if spec.write_max_iops is not None else spec.max_iops
    else:
        base, bw, iops = spec.read_base_us, spec.read_bw_mbps, spec.max_iops
    t = base + size_pages * PAGE_SIZE / (bw * BYTES_PER_US_PER_MBPS)
    if iops is not None:
        t = max(t, 1e6 / iops)
    return t


def speed_score(spec: DeviceSpec) -> float:
    """Lower is faster: the 1-page read service time."""
    return service_time(spec, Op.READ, 1)


@dataclass
class DeviceState:
    used_pages: int = 0
    busy_until_us: float = 0.0
    resident: set[int] = field(default_factory=set)


def request_latency(state: DeviceState, spec: DeviceSpec, op: Op, size_pages: int,
                    now_us: float) -> tuple[float, float]:
    """Queue a request on the device; returns ``(completion_us, busy_until_us)``.

    The caller's latency is ``completion_us - now_us``. ``state`` is updated.
    """
    start = max(now_us, state.busy_until_us)
    done = start + service_time(spec, op, size_pages)
    state.busy_until_us = done
    return done, done


@dataclass(frozen=True)
class HssConfig:
    devices: tuple[DeviceSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "devices", tuple(self.devices))
        n = len(self.devices)
        if not 2 <= n <= MAX_DEVICES:
            raise ValueError(f"an HSS needs 2..{MAX_DEVICES} devices, got {n}")
        scores = [speed_score(d) for d in self.devices]
        for a, b, da, db in zip(scores, scores[1:], self.devices, self.devices[1:]):
            if not a < b:
                raise ValueError(f"devices must be ordered fastest first: "
                                 f"{da.name} ({a:.2f} us) vs {db.name} ({b:.2f} us)")

    @property
    def fast_device_index(self) -> int:
        return 0

    @property
    def num_devices(self) -> int:
        return len(self.devices)

    def with_capacities(self, caps) -> "HssConfig":
        return HssConfig(tuple(d.with_capacity(c) for d, c in zip(self.devices, caps)))


# Table-4 device classes. Capacities are placeholders; presets rescale them.
DEVICE_CLASSES: dict[str, DeviceSpec] = {
    "H": DeviceSpec("H", 1, 10.0, 10.0, 2400.0, 2000.0, 550_000, 500_000),
    "M": DeviceSpec("M", 1, 80.0, 80.0, 560.0, 510.0, 895_000, 21_000),
    "L_SSD": DeviceSpec("L_SSD", 1, 100.0, 100.0, 520.0, 450.0),
    "L": DeviceSpec("L", 1, 4000.0, 4000.0, 210.0, 210.0),
    "PMEM": DeviceSpec("PMEM", 1, 1.0, 1.0, 7450.0, 2250.0),
}

PRESETS: dict[str, tuple[str, ...]] = {
    "perf_opt": ("H", "M"),
    "cost_opt": ("H", "L"),
    "pmem_hss": ("PMEM", "H"),
    "tri_hss": ("H", "M", "L"),
    "quad_hss": ("H", "M", "L_SSD", "L"),
}

DEFAULT_FOOTPRINT = 10_000


def scaled_capacities(num_devices: int, footprint_pages: int, fast_fraction: float) -> list[int]:
    """Fast device holds ``fast_fraction`` of the footprint; each middle tier
    doubles the previous one; the slowest tier holds the whole footprint."""
    fast = max(1, math.ceil(fast_fraction * footprint_pages))
    caps = [fast]
    for _ in range(num_devices - 2):
        caps.append(max(1, min(footprint_pages, caps[-1] * 2)))
    caps.append(max(1, footprint_pages))
    return caps


def preset(name: str, footprint_pages: int = DEFAULT_FOOTPRINT,
           fast_fraction: float = 0.1) -> HssConfig:
    try:
        classes = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
    if not 0 < fast_fraction <= 1:
        raise ValueError("fast_fraction must lie in (0, 1]")
    caps = scaled_capacities(len(classes), footprint_pages, fast_fraction)
    return HssConfig(tuple(DEVICE_CLASSES[c].with_capacity(k) for c, k in zip(classes, caps)))
