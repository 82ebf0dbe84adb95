"""Run reports, comparisons against Fast-Only, and knob sweeps."""
from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .baselines import PolicyKind
from .devices import HssConfig
from .engine import CAUSES, Engine, Knobs, RunResult, resolve_knob
from .trace_io import IORequest

REPORT_COLUMNS = ("policy", "requests", "avg_latency_us", "p99_us", "p9999_us", "iops", "wa",
                  "migrations", "norm_avg_latency")


def nearest_rank(sorted_values: np.ndarray, pct: float) -> float:
    """Nearest-rank percentile of an ascending array (no interpolation)."""
    n = len(sorted_values)
    if n == 0:
        return 0.0
    rank = max(1, math.ceil(pct / 100.0 * n))
    return float(sorted_values[min(rank, n) - 1])


@dataclass
class SimReport:
    policy: str
    requests: int
    avg_latency_us: float
    p99_latency_us: float
    p9999_latency_us: float
    iops: float
    write_amplification: float
    migration_count: int
    bytes_written_per_device: dict[int, dict[str, int]]
    normalized_avg_latency: float | None = None
    training_loss_series: dict[str, list[tuple[int, float]]] = field(default_factory=dict)
    migrations_into: list[int] = field(default_factory=list)

    @property
    def total_bytes_written(self) -> int:
        return sum(sum(c.values()) for c in self.bytes_written_per_device.values())

    def row(self) -> list[str]:
        norm = "" if self.normalized_avg_latency is None else repr(self.normalized_avg_latency)
        return [self.policy, str(self.requests), repr(self.avg_latency_us),
                repr(self.p99_latency_us), repr(self.p9999_latency_us), repr(self.iops),
                repr(self.write_amplification), str(self.migration_count), norm]


def compute_report(result: RunResult) -> SimReport:
    lat = np.sort(result.latencies_us)
    n = len(lat)
    written = sum(sum(c.values()) for c in result.bytes_written.values())
    # an empty (or read-only) workload reports WA as 1
    wa = written / result.workload_write_bytes if result.workload_write_bytes else 1.0
    span = result.last_completion_us - result.first_arrival_us
    iops = n / (span * 1e-6) if n and span > 0 else 0.0
    return SimReport(
        policy=result.policy,
        requests=n,
        avg_latency_us=float(lat.mean()) if n else 0.0,
        p99_latency_us=nearest_rank(lat, 99.0),
        p9999_latency_us=nearest_rank(lat, 99.99),
        iops=iops,
        write_amplification=wa,
        migration_count=result.migrations,
        bytes_written_per_device={d: dict(c) for d, c in result.bytes_written.items()},
        training_loss_series=result.losses,
        migrations_into=list(result.migrations_into),
    )


def format_reports(reports: Iterable[SimReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in reports:
        w.writerow(r.row())
    return buf.getvalue()


def write_reports(path, reports: Iterable[SimReport]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(format_reports(reports))


def read_reports(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_loss_log(path, report: SimReport) -> None:
    """CSV ``agent,request_index,loss`` for every training step."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("agent", "request_index", "loss"))
        for agent, series in report.training_loss_series.items():
            for idx, loss in series:
                w.writerow((agent, idx, repr(loss)))


def write_event_log(path, events: Sequence[tuple]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("time_us", "kind", "page", "device", "latency_us"))
        for t, kind, page, dev, lat in events:
            w.writerow((repr(float(t)), kind, "" if page is None else page,
                        "" if dev is None else dev, "" if lat is None else repr(float(lat))))


def simulate(trace: Sequence[IORequest], hss: HssConfig, policy, seed: int = 42,
             knobs: Knobs | None = None, **kw) -> tuple[SimReport, RunResult]:
    result = Engine(trace, hss, policy, seed=seed, knobs=knobs, **kw).run()
    return compute_report(result), result


def _workers(jobs: int) -> int:
    env = os.environ.get("HSS_SIM_THREADS")
    limit = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(limit, jobs))


def _map(fn, items: list):
    workers = _workers(len(items))
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def compare(trace: Sequence[IORequest], hss: HssConfig, policies: Sequence, seed: int = 42,
            knobs: Knobs | None = None, **kw) -> list[SimReport]:
    """Fast-Only first, then every requested policy on the same trace and seed.

    Each report carries ``normalized_avg_latency`` relative to Fast-Only.
    """
    kinds = [PolicyKind.parse(p) for p in policies]
    order = [PolicyKind.FAST_ONLY] + [k for k in kinds if k is not PolicyKind.FAST_ONLY]
    reports = _map(lambda k: simulate(trace, hss, k, seed, knobs, **kw)[0], order)
    base = reports[0].avg_latency_us
    for r in reports:
        r.normalized_avg_latency = (r.avg_latency_us / base if base > 0 else 1.0)
    reports[0].normalized_avg_latency = 1.0
    if PolicyKind.FAST_ONLY not in kinds:
        return reports[1:]
    by_kind = {k: r for k, r in zip(order, reports)}
    return [by_kind[k] for k in kinds]


def sweep(trace: Sequence[IORequest], hss: HssConfig, policy, knob: str, values: Sequence,
          seed: int = 42, knobs: Knobs | None = None, **kw) -> list[SimReport]:
    """One report per knob value; unknown knob names raise ValueError."""
    name = resolve_knob(knob)
    base = knobs or Knobs()
    points = [base.replace(**{name: v}) for v in values]
    return _map(lambda k: simulate(trace, hss, policy, seed, k, **kw)[0], points)
