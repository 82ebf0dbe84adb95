"""Canonical I/O trace files, multi-programmed merging and synthetic workloads.

Trace files are CSV with the header ``ts_us,op,addr_page,size_pages`` where
``op`` is ``R`` or ``W`` and addresses are 4 KiB page indices.
"""
from __future__ import annotations

import csv
import enum
import heapq
import io
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

PAGE_SIZE = 4096
TRACE_HEADER = ("ts_us", "op", "addr_page", "size_pages")


class Op(enum.IntEnum):
    READ = 0
    WRITE = 1

    @property
    def code(self) -> str:
        return "W" if self is Op.WRITE else "R"


class IORequest(NamedTuple):
    arrival_us: int
    op: Op
    page_addr: int
    size_pages: int


class TraceError(ValueError):
    """Malformed trace content."""


class TraceParseError(TraceError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


class TraceOrderError(TraceError):
    def __init__(self, line: int, prev: int, ts: int):
        super().__init__(f"line {line}: timestamp {ts} precedes {prev}")
        self.line = line


_OPS = {"R": Op.READ, "W": Op.WRITE}


def _parse_int(text: str, line: int, name: str, minimum: int) -> int:
    try:
        value = int(text)
    except ValueError:
        raise TraceParseError(line, f"{name} is not an integer: {text!r}") from None
    if value < minimum:
        raise TraceParseError(line, f"{name} must be >= {minimum}, got {value}")
    return value


def parse_trace(lines: Iterable[str]) -> list[IORequest]:
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise TraceParseError(1, "missing header") from None
    if tuple(h.strip() for h in header) != TRACE_HEADER:
        raise TraceParseError(1, f"expected header {','.join(TRACE_HEADER)}")
    out: list[IORequest] = []
    prev = 0
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 4:
            raise TraceParseError(lineno, f"expected 4 fields, got {len(row)}")
        ts = _parse_int(row[0].strip(), lineno, "ts_us", 0)
        op = _OPS.get(row[1].strip())
        if op is None:
            raise TraceParseError(lineno, f"op must be R or W, got {row[1]!r}")
        addr = _parse_int(row[2].strip(), lineno, "addr_page", 0)
        size = _parse_int(row[3].strip(), lineno, "size_pages", 1)
        if ts < prev:
            raise TraceOrderError(lineno, prev, ts)
        prev = ts
        out.append(IORequest(ts, op, addr, size))
    return out


def load_trace(path: str | os.PathLike) -> list[IORequest]:
    with open(path, newline="") as fh:
        return parse_trace(fh)


def format_trace(trace: Iterable[IORequest]) -> str:
    buf = io.StringIO()
    buf.write(",".join(TRACE_HEADER) + "\n")
    for r in trace:
        buf.write(f"{r.arrival_us},{r.op.code},{r.page_addr},{r.size_pages}\n")
    return buf.getvalue()


def write_trace(trace: Iterable[IORequest], path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(format_trace(trace))


def footprint(trace: Sequence[IORequest]) -> int:
    """Number of distinct pages touched by ``trace``."""
    pages: set[int] = set()
    for r in trace:
        pages.update(range(r.page_addr, r.page_addr + r.size_pages))
    return len(pages)


def address_span(trace: Sequence[IORequest]) -> int:
    """One past the highest page touched (0 for an empty trace)."""
    return max((r.page_addr + r.size_pages for r in trace), default=0)


def merge_traces(traces: Sequence[Sequence[IORequest]]) -> list[IORequest]:
    """Merge per-thread traces into one multi-programmed trace.

    Each input gets a disjoint page namespace: trace ``i`` is shifted by
    ``i * max_span`` where ``max_span`` is the largest address span among the
    inputs. Equal timestamps are ordered by input index, then position.
    """
    if not traces:
        raise ValueError("merge_traces needs at least one trace")
    stride = max(address_span(t) for t in traces)

    def keyed(i: int, t: Sequence[IORequest]):
        off = i * stride
        for pos, r in enumerate(t):
            yield (r.arrival_us, i, pos), r._replace(page_addr=r.page_addr + off)

    merged = heapq.merge(*(keyed(i, t) for i, t in enumerate(traces)), key=lambda kv: kv[0])
    return [r for _, r in merged]


@dataclass(frozen=True)
class TraceProfile:
    read_fraction: float
    mean_inter_request_us: float
    footprint_pages: int
    request_size_distribution: tuple[tuple[int, float], ...] = ((1, 1.0),)
    hot_fraction: float = 0.0
    hot_skew: float = 0.0
    phase_length_requests: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.read_fraction <= 1.0:
            raise ValueError("read_fraction must lie in [0, 1]")
        if not self.mean_inter_request_us > 0:
            raise ValueError("mean_inter_request_us must be positive")
        if self.footprint_pages < 1:
            raise ValueError("footprint_pages must be >= 1")
        dist = tuple((int(s), float(p)) for s, p in self.request_size_distribution)
        object.__setattr__(self, "request_size_distribution", dist)
        if not dist or any(s < 1 or p < 0 for s, p in dist):
            raise ValueError("request sizes must be >= 1 with non-negative probability")
        if abs(sum(p for _, p in dist) - 1.0) > 1e-9:
            raise ValueError("request size probabilities must sum to 1")
        if max(s for s, _ in dist) > self.footprint_pages:
            raise ValueError("request size exceeds footprint")
        if not 0.0 <= self.hot_fraction <= 1.0 or not 0.0 <= self.hot_skew <= 1.0:
            raise ValueError("hot_fraction and hot_skew must lie in [0, 1]")
        if self.hot_skew > 0 and self.hot_pages < 1:
            raise ValueError("hot set is empty but hot_skew > 0")
        if self.hot_skew < 1 and self.hot_skew > 0 and self.hot_pages >= self.footprint_pages:
            raise ValueError("hot set covers the whole footprint")
        if self.phase_length_requests is not None and self.phase_length_requests < 1:
            raise ValueError("phase_length_requests must be positive")

    @property
    def hot_pages(self) -> int:
        return int(math.floor(self.hot_fraction * self.footprint_pages))


def generate_trace(profile: TraceProfile, num_requests: int, seed: int) -> list[IORequest]:
    """Draw ``num_requests`` requests from ``profile``; deterministic in ``seed``.

    Inter-arrival gaps are exponential, rounded to whole microseconds. With
    ``phase_length_requests`` set, every other phase uses the read/write
    inverted profile (read fraction ``1 - read_fraction``).
    """
    if num_requests < 1:
        raise ValueError("num_requests must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    n = num_requests
    p = profile

    gaps = rng.exponential(p.mean_inter_request_us, size=n)
    gaps[0] = 0.0
    arrivals = np.floor(np.cumsum(gaps)).astype(np.int64)

    read_p = np.full(n, p.read_fraction)
    if p.phase_length_requests:
        inverted = (np.arange(n) // p.phase_length_requests) % 2 == 1
        read_p[inverted] = 1.0 - p.read_fraction
    is_read = rng.random(n) < read_p

    sizes_v = np.array([s for s, _ in p.request_size_distribution], dtype=np.int64)
    probs = np.array([q for _, q in p.request_size_distribution])
    sizes = sizes_v[rng.choice(len(sizes_v), size=n, p=probs / probs.sum())]

    hot = p.hot_pages if p.hot_skew > 0 else 0
    to_hot = rng.random(n) < p.hot_skew if hot else np.zeros(n, dtype=bool)
    hot_addr = rng.integers(0, max(hot, 1), size=n)
    cold_addr = rng.integers(hot, p.footprint_pages, size=n) if hot < p.footprint_pages else hot_addr
    addrs = np.where(to_hot, hot_addr, cold_addr)
    addrs = np.minimum(addrs, p.footprint_pages - sizes)

    return [
        IORequest(int(t), Op.READ if r else Op.WRITE, int(a), int(s))
        for t, r, a, s in zip(arrivals, is_read, addrs, sizes)
    ]


def parse_size_distribution(text: str) -> tuple[tuple[int, float], ...]:
    """Parse ``"1:0.5,8:0.5"`` into ``((1, 0.5), (8, 0.5))``."""
    out = []
    for item in text.split(","):
        size, _, prob = item.strip().partition(":")
        out.append((int(size), float(prob)))
    return tuple(out)
