"""Per-page metadata table and the binned 7-feature observation.

Intervals are counted in requests (access interval) and in migrations
(migration interval) using global sequence counters. The interval reported
for a page is always ``current counter - counter at the page's last event``:
on the request path this is exactly the gap between the page's two most
recent accesses; for the background scanner it is the page's age.
"""
from __future__ import annotations

import csv
from typing import NamedTuple

import numpy as np

from .trace_io import Op

NUM_BINS = (2, 8, 64, 64, 8, 2, 64)
FIELD_BITS = (1, 3, 8, 8, 3, 1, 8)
_SCALE = np.array([1.0 / (b - 1) for b in NUM_BINS])


def size_bin(size_pages: int) -> int:
    return min(max(int(size_pages), 1).bit_length() - 1, 7)


def log_bin(value: int) -> int:
    """floor(log2(max(v, 1))) saturating at 63."""
    return min(max(int(value), 1).bit_length() - 1, 63)


def cap_bin(free_fraction: float) -> int:
    return min(max(int(8.0 * free_fraction), 0), 7)


class Observation(NamedTuple):
    req_type_bin: int
    req_size_bin: int
    acc_intr_bin: int
    acc_freq_bin: int
    fast_cap_bin: int
    curr_dev_bin: int
    migr_intr_bin: int

    def pack(self) -> int:
        word, shift = 0, 0
        for value, bits in zip(self, FIELD_BITS):
            if not 0 <= value < (1 << bits):
                raise ValueError(f"bin {value} does not fit in {bits} bits")
            word |= value << shift
            shift += bits
        return word

    @classmethod
    def unpack(cls, word: int) -> "Observation":
        vals, shift = [], 0
        for bits in FIELD_BITS:
            vals.append((word >> shift) & ((1 << bits) - 1))
            shift += bits
        return cls(*vals)


def to_network_input(obs: Observation) -> np.ndarray:
    return np.asarray(obs, dtype=np.float64) * _SCALE


class PageMeta:
    __slots__ = ("curr_dev", "acc_freq", "last_access_seq", "last_migr_seq",
                 "last_touch_seq", "size_pages_last", "last_op", "acc_intr")

    def __init__(self):
        self.curr_dev: int | None = None
        self.acc_freq = 0
        self.last_access_seq: int | None = None
        self.last_migr_seq: int | None = None
        self.last_touch_seq = 0
        self.size_pages_last = 1
        self.last_op = Op.WRITE
        # gap between the two most recent accesses; None until accessed twice
        self.acc_intr: int | None = None

    def __repr__(self):
        return (f"PageMeta(dev={self.curr_dev}, freq={self.acc_freq}, "
                f"last_acc={self.last_access_seq}, last_migr={self.last_migr_seq})")


class MetadataStore:
    """Page table plus the global access and migration counters."""

    def __init__(self):
        self.pages: dict[int, PageMeta] = {}
        self.access_seq = 0
        self.migr_seq = 0

    def __len__(self):
        return len(self.pages)

    def get(self, page: int) -> PageMeta | None:
        return self.pages.get(page)

    def meta(self, page: int) -> PageMeta:
        m = self.pages.get(page)
        if m is None:
            m = self.pages[page] = PageMeta()
        return m

    def begin_request(self) -> int:
        """Advance the access counter; call once per request before recording."""
        self.access_seq += 1
        return self.access_seq

    def record_access(self, page: int, op: Op, size_pages: int) -> PageMeta:
        m = self.meta(page)
        seq = self.access_seq
        if m.last_access_seq is not None:
            m.acc_intr = seq - m.last_access_seq
        m.acc_freq += 1
        m.last_access_seq = seq
        m.last_touch_seq = seq
        m.size_pages_last = size_pages
        m.last_op = op
        return m

    def record_migration(self, page: int, device: int) -> PageMeta:
        self.migr_seq += 1
        m = self.meta(page)
        m.curr_dev = device
        m.last_migr_seq = self.migr_seq
        return m

    def access_interval(self, m: PageMeta | None) -> int:
        if m is None or m.last_access_seq is None:
            return 0
        return self.access_seq - m.last_access_seq

    def migration_interval(self, m: PageMeta | None) -> int:
        if m is None or m.last_access_seq is None:
            return 0
        if m.last_migr_seq is None:
            return self.migr_seq
        return self.migr_seq - m.last_migr_seq

    def observe(self, page: int, op: Op, size_pages: int, fast_free_fraction: float) -> Observation:
        m = self.pages.get(page)
        freq = m.acc_freq if m is not None else 0
        dev = m.curr_dev if m is not None else None
        return Observation(
            1 if op == Op.WRITE else 0,
            size_bin(size_pages),
            log_bin(self.access_interval(m)) if m is not None and m.last_access_seq is not None else 0,
            log_bin(freq) if freq else 0,
            cap_bin(fast_free_fraction),
            0 if not dev else 1,
            log_bin(self.migration_interval(m)),
        )

    def observe_page(self, page: int, fast_free_fraction: float) -> Observation:
        """Observation for a resident page outside the request path (scanner)."""
        m = self.pages.get(page)
        if m is None:
            return self.observe(page, Op.READ, 1, fast_free_fraction)
        return self.observe(page, m.last_op, m.size_pages_last, fast_free_fraction)

    def dump_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["page", "device", "acc_freq", "last_access_seq"])
            for page in sorted(self.pages):
                m = self.pages[page]
                w.writerow([page, "" if m.curr_dev is None else m.curr_dev, m.acc_freq,
                            "" if m.last_access_seq is None else m.last_access_seq])
