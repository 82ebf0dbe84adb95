"""Reference policies and the policy registry.

Every policy runs through the same engine; a :class:`PolicySpec` only says
which decision machinery is active:

========================  ==============  ==================  ==============
kind                      placement       migration           fast overflow
========================  ==============  ==================  ==============
harmonia                  RL agent        RL agent (coord.)   next tier
harmonia-nocoord          RL agent        RL agent (local)    next tier
sibyl                     RL agent        none                LRU eviction
cde                       CDE heuristic   none                LRU eviction
cde-rl-migr               CDE heuristic   RL agent (coord.)   LRU eviction
sapm                      one shared RL agent, idle-only      next tier
oracle                    future-aware    free idle reshuffle free demotion
fast-only                 device 0        none                never full
========================  ==============  ==================  ==============
"""
from __future__ import annotations

import enum
import heapq
from collections import deque
from dataclasses import dataclass
from typing import Sequence

from .trace_io import IORequest, Op

INF = float("inf")


class PolicyKind(enum.Enum):
    HARMONIA = "harmonia"
    HARMONIA_NO_COORD = "harmonia-nocoord"
    SIBYL = "sibyl"
    CDE = "cde"
    CDE_RL_MIGR = "cde-rl-migr"
    SAPM = "sapm"
    ORACLE = "oracle"
    FAST_ONLY = "fast-only"

    @classmethod
    def parse(cls, name: "str | PolicyKind") -> "PolicyKind":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("_", "-")
        aliases = {"harmonianocoord": "harmonia-nocoord", "fastonly": "fast-only",
                   "cde+rl-migr": "cde-rl-migr", "cderlmigr": "cde-rl-migr"}
        key = aliases.get(key.replace("-", ""), key) if key not in cls._value2member_map_ else key
        try:
            return cls(key)
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown policy {name!r}; valid: {valid}") from None


@dataclass(frozen=True)
class PolicySpec:
    kind: PolicyKind
    placement: str          # "rl", "cde", "fast", "oracle"
    migration: str          # "none", "rl", "rl-local", "shared", "oracle"
    overflow: str           # "lru", "next-tier", "oracle", "none"
    scan_on_request: bool

    @property
    def has_rl_placement(self) -> bool:
        return self.placement == "rl"

    @property
    def has_migration_agent(self) -> bool:
        return self.migration in ("rl", "rl-local", "shared")


POLICIES: dict[PolicyKind, PolicySpec] = {
    PolicyKind.HARMONIA: PolicySpec(PolicyKind.HARMONIA, "rl", "rl", "next-tier", True),
    PolicyKind.HARMONIA_NO_COORD: PolicySpec(PolicyKind.HARMONIA_NO_COORD, "rl", "rl-local",
                                             "next-tier", True),
    PolicyKind.SIBYL: PolicySpec(PolicyKind.SIBYL, "rl", "none", "lru", False),
    PolicyKind.CDE: PolicySpec(PolicyKind.CDE, "cde", "none", "lru", False),
    PolicyKind.CDE_RL_MIGR: PolicySpec(PolicyKind.CDE_RL_MIGR, "cde", "rl", "lru", True),
    PolicyKind.SAPM: PolicySpec(PolicyKind.SAPM, "rl", "shared", "next-tier", False),
    PolicyKind.ORACLE: PolicySpec(PolicyKind.ORACLE, "oracle", "oracle", "oracle", False),
    PolicyKind.FAST_ONLY: PolicySpec(PolicyKind.FAST_ONLY, "fast", "none", "none", False),
}


def policy_spec(kind) -> PolicySpec:
    return POLICIES[PolicyKind.parse(kind)]


def fast_only_policy(request: IORequest) -> int:
    return 0


def cde_place(acc_freq: int, size_pages: int, num_devices: int,
              hot_threshold: int = 4, random_threshold: int = 2) -> int:
    """Hot (frequently accessed) or small random data goes to the fast device."""
    if acc_freq >= hot_threshold or size_pages <= random_threshold:
        return 0
    return num_devices - 1


class FutureIndex:
    """Next-access lookup over a fully known trace.

    ``advance(i)`` must be called for requests in order; afterwards
    ``next_use(page)`` is the index of the page's next read after ``i``, or
    INF when the next access overwrites it: a copy that is rewritten before
    it is read again is dead wherever it sits.
    """

    def __init__(self, trace: Sequence[IORequest]):
        occ: dict[int, deque[tuple[int, bool]]] = {}
        for i, r in enumerate(trace):
            is_read = r.op == Op.READ
            for p in range(r.page_addr, r.page_addr + r.size_pages):
                occ.setdefault(p, deque()).append((i, is_read))
        self._occ = occ

    def advance(self, request: IORequest) -> None:
        for p in range(request.page_addr, request.page_addr + request.size_pages):
            self._occ[p].popleft()

    def next_use(self, page: int) -> float:
        q = self._occ.get(page)
        if not q:
            return INF
        i, is_read = q[0]
        return i if is_read else INF


class BeladyPlanner:
    """Keeps device 0 stocked with the pages whose next access comes soonest.

    Moves it makes are free (no device time, no write accounting).
    """

    def __init__(self, trace: Sequence[IORequest]):
        self.future = FutureIndex(trace)
        self._fast: list[tuple[float, int]] = []   # max-heap by next use: (-next, page)
        self._slow: list[tuple[float, int]] = []   # min-heap by next use: (next, page)

    def note_fast(self, page: int) -> None:
        heapq.heappush(self._fast, (-self.future.next_use(page), page))

    def note_slow(self, page: int) -> None:
        heapq.heappush(self._slow, (self.future.next_use(page), page))

    def farthest_fast(self, on_fast) -> tuple[float, int] | None:
        """(next_use, page) of the fast-resident page used farthest in the future."""
        h = self._fast
        while h:
            neg, page = h[0]
            if on_fast(page) and -neg == self.future.next_use(page):
                return -neg, page
            heapq.heappop(h)
            if on_fast(page):
                heapq.heappush(h, (-self.future.next_use(page), page))
        return None

    def soonest_slow(self, on_slow) -> tuple[float, int] | None:
        h = self._slow
        while h:
            nxt, page = h[0]
            if on_slow(page) and nxt == self.future.next_use(page):
                return nxt, page
            heapq.heappop(h)
            if on_slow(page):
                heapq.heappush(h, (self.future.next_use(page), page))
        return None
