"""Deterministic discrete-event replay of a trace against a hybrid storage system.

Per request, events are handled in this order: arrival, completion, scan,
migration, training, sync. Between two arrivals the engine checks for an
idle window and drains the migration queue while the system stays idle.
Device service is analytic (single FIFO channel per device), so completion
times are known as soon as a request is dispatched.
"""
from __future__ import annotations

import dataclasses
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .agents import (LatencyNormalizer, MigrationAgent, MigrationQueue, MigrationRewardConfig,
                     PlacementAgent)
from .baselines import INF, BeladyPlanner, PolicyKind, PolicySpec, cde_place, policy_spec
from .devices import DeviceSpec, HssConfig, request_latency, service_time
from .metadata import MetadataStore, log_bin, to_network_input
from .rl import Hyperparameters, MIGRATION_HP, PLACEMENT_HP
from .trace_io import PAGE_SIZE, IORequest, Op, footprint

EVENT_KINDS = ("RequestArrival", "RequestComplete", "ScanTick", "MigrationStep",
               "TrainTick", "SyncTick")
CAUSES = ("placement", "eviction", "migration")


class SimulationInvariantError(RuntimeError):
    """The engine reached a state that should be impossible (a bug)."""


@dataclass
class Knobs:
    migration_queue_size: int = 10
    reward_horizon_n: int = 50
    reward_batch_x: int = 10
    penalty_beta: float = 0.1
    credit_stays: bool = False
    scan_window: int = 32
    idle_lookahead_us: float | None = None
    train_every: int = 10
    sync_interval: int = 1000
    num_atoms: int = 51
    cde_hot_threshold: int = 4
    cde_random_threshold: int = 2
    training: bool = True
    check_invariants: bool = False
    record_events: bool = False

    def __post_init__(self):
        if self.migration_queue_size < 0:
            raise ValueError("migration_queue_size must be >= 0")
        if self.scan_window < 1:
            raise ValueError("scan_window must be >= 1")
        if self.idle_lookahead_us is not None and self.idle_lookahead_us < 0:
            raise ValueError("idle_lookahead_us must be >= 0")

    def replace(self, **kw) -> "Knobs":
        return dataclasses.replace(self, **kw)


KNOB_NAMES = tuple(f.name for f in dataclasses.fields(Knobs))
# short aliases used on the command line
KNOB_ALIASES = {"queue_size": "migration_queue_size", "n": "reward_horizon_n",
                "x": "reward_batch_x", "beta": "penalty_beta", "atoms": "num_atoms",
                "lookahead": "idle_lookahead_us", "train_cadence": "train_every"}


def resolve_knob(name: str) -> str:
    key = KNOB_ALIASES.get(name, name)
    if key not in KNOB_NAMES:
        valid = ", ".join(sorted(set(KNOB_NAMES) | set(KNOB_ALIASES)))
        raise ValueError(f"unknown knob {name!r}; valid knobs: {valid}")
    return key


class _Device:
    """Mutable device state: FIFO channel plus an LRU-ordered resident set."""

    __slots__ = ("spec", "capacity", "used_pages", "busy_until_us", "resident")

    def __init__(self, spec: DeviceSpec):
        self.spec = spec
        self.capacity = spec.capacity_pages
        self.used_pages = 0
        self.busy_until_us = 0.0
        self.resident: OrderedDict[int, None] = OrderedDict()

    @property
    def free(self) -> int:
        return self.capacity - self.used_pages


@dataclass
class RunResult:
    """Raw outcome of one run; :mod:`hss_sim.metrics` turns it into a report."""

    policy: str
    latencies_us: np.ndarray
    first_arrival_us: float
    last_completion_us: float
    workload_write_bytes: int
    bytes_written: dict[int, dict[str, int]]
    migrations: int
    migrations_into: list[int]
    migrations_out_of: list[int]
    oracle_moves: int
    evicted_pages: int
    events: list[tuple] | None
    losses: dict[str, list[tuple[int, float]]]
    agent_stats: dict[str, dict[str, int]] = field(default_factory=dict)

    @property
    def requests(self) -> int:
        return len(self.latencies_us)


class Engine:
    def __init__(self, trace: Sequence[IORequest], hss: HssConfig, policy, seed: int = 42,
                 knobs: Knobs | None = None, placement_hp: Hyperparameters | None = None,
                 migration_hp: Hyperparameters | None = None, kernels=None):
        self.trace = trace
        self.spec: PolicySpec = policy_spec(policy)
        self.knobs = knobs = knobs or Knobs()
        if self.spec.kind is PolicyKind.FAST_ONLY:
            fp = footprint(trace) if trace else 1
            caps = [max(hss.devices[0].capacity_pages, fp)] + [d.capacity_pages for d in hss.devices[1:]]
            hss = hss.with_capacities(caps)
        self.hss = hss
        self.ndev = hss.num_devices
        self.devices = [_Device(d) for d in hss.devices]
        self.fast = self.devices[0]
        self.rng = np.random.Generator(np.random.PCG64(seed))
        self.store = MetadataStore()
        self.queue = MigrationQueue(knobs.migration_queue_size)
        self.lookahead = (knobs.idle_lookahead_us if knobs.idle_lookahead_us is not None
                          else 2.0 * service_time(hss.devices[0], Op.READ, 1))
        floor = min(min(service_time(d, Op.READ, 1), service_time(d, Op.WRITE, 1))
                    for d in hss.devices)
        self.normalizer = LatencyNormalizer(floor)

        def merge_hp(hp: Hyperparameters) -> Hyperparameters:
            return dataclasses.replace(hp, num_atoms=knobs.num_atoms,
                                       train_every=knobs.train_every,
                                       sync_interval=knobs.sync_interval)

        self.placement_hp = merge_hp(placement_hp or PLACEMENT_HP)
        self.migration_hp = merge_hp(migration_hp or MIGRATION_HP)
        self.placer: PlacementAgent | None = None
        self.migrator: MigrationAgent | None = None
        self.learners = []
        if self.spec.has_rl_placement:
            self.placer = PlacementAgent(self.ndev, self.placement_hp, self.rng, self.normalizer,
                                         kernels=kernels)
            self.learners.append(self.placer)
        if self.spec.has_migration_agent and knobs.migration_queue_size > 0:
            cfg = MigrationRewardConfig(knobs.reward_horizon_n, knobs.reward_batch_x,
                                        knobs.penalty_beta, knobs.credit_stays)
            if self.spec.migration == "shared":
                self.migrator = MigrationAgent(self.ndev, self.placement_hp, self.rng,
                                               self.normalizer, cfg, self._page_input,
                                               training=self.placer.training,
                                               buffer=self.placer.buffer)
                # one agent: share the acting network and the optimizer too
                self.migrator.inference = self.placer.inference
                self.migrator.optimizer = self.placer.optimizer
            else:
                self.migrator = MigrationAgent(self.ndev, self.migration_hp, self.rng,
                                               self.normalizer, cfg, self._page_input,
                                               coordinated=self.spec.migration == "rl",
                                               kernels=kernels)
                self.learners.append(self.migrator)
        if not knobs.training:
            for lr in self.learners:
                lr.train_enabled = False
        self.oracle = BeladyPlanner(trace) if self.spec.placement == "oracle" else None

        self.page_list: list[int] = []
        self.scan_cursor = 0
        self.inflight: dict[int, tuple[int, float]] = {}
        self.bytes_written = {d: {c: 0 for c in CAUSES} for d in range(self.ndev)}
        self.migrations = 0
        self.migr_in = [0] * self.ndev
        self.migr_out = [0] * self.ndev
        self.oracle_moves = 0
        self.evicted_pages = 0
        self.workload_write_bytes = 0
        self.events: list[tuple] | None = [] if knobs.record_events else None
        self.latencies = np.zeros(len(trace))
        self.completions = np.zeros(len(trace))
        self.clock = 0.0
        self.request_index = -1

    # ------------------------------------------------------------------ utils
    def _log(self, t, kind, page=None, device=None, latency=None):
        self.events.append((t, kind, page, device, latency))

    def fast_free_fraction(self) -> float:
        f = self.fast
        return f.free / f.capacity

    def _page_input(self, page: int) -> np.ndarray:
        return to_network_input(self.store.observe_page(page, self.fast_free_fraction()))

    def _set_residency(self, page: int, dev: int) -> None:
        m = self.store.meta(page)
        old = m.curr_dev
        if old == dev:
            self.devices[dev].resident.move_to_end(page)
            return
        if old is None:
            self.page_list.append(page)
        else:
            od = self.devices[old]
            del od.resident[page]
            od.used_pages -= 1
        nd = self.devices[dev]
        nd.resident[page] = None
        nd.used_pages += 1
        m.curr_dev = dev
        if self.oracle is not None:
            (self.oracle.note_fast if dev == 0 else self.oracle.note_slow)(page)

    def _needed(self, pages, dev: int) -> int:
        pages_meta = self.store.pages
        return sum(1 for p in pages if pages_meta[p].curr_dev != dev)

    def _device_with_room(self, preferred: int, need: int = 1, pages=None) -> int:
        """Nearest device at or below ``preferred`` (then above) with room.

        With ``pages``, the room needed is counted per candidate device.
        """
        order = list(range(preferred, self.ndev)) + list(range(preferred - 1, -1, -1))
        for d in order:
            if self.devices[d].free >= (need if pages is None else self._needed(pages, d)):
                return d
        raise SimulationInvariantError(f"no device can hold {need} more pages")

    # -------------------------------------------------------------- placement
    def _choose_device(self, req: IORequest, x, first_meta) -> int:
        kind = self.spec.placement
        if kind == "rl":
            return self.placer.place(x)
        if kind == "cde":
            k = self.knobs
            return cde_place(first_meta.acc_freq, req.size_pages, self.ndev,
                             k.cde_hot_threshold, k.cde_random_threshold)
        if kind == "fast":
            return 0
        return self._oracle_choice(req)

    def _make_room(self, dev: int, pages, now: float) -> tuple[int, float]:
        """Ensure ``dev`` can take ``pages``; returns (device used, ready time)."""
        need = self._needed(pages, dev)
        d = self.devices[dev]
        if d.free >= need:
            return dev, now
        rule = self.spec.overflow
        if rule == "lru" and dev < self.ndev - 1:
            ready = self._evict_lru(dev, need - d.free, set(pages), now)
            if ready is not None:
                return dev, ready
        if rule == "oracle" and dev == 0:
            self._oracle_demote(need - d.free, exclude=set(pages))
            if d.free >= need:
                return dev, now
        target = self._device_with_room(dev, pages=pages)
        return target, now

    def _evict_lru(self, dev: int, count: int, protect: set, now: float) -> float | None:
        """Move ``count`` least-recently-used pages from ``dev`` to the next tier,
        on the critical path. Returns when the caller's request may start."""
        d = self.devices[dev]
        victims = []
        for p in d.resident:
            if p not in protect:
                victims.append(p)
                if len(victims) == count:
                    break
        if len(victims) < count:
            return None
        lower = dev + 1
        ready = now
        if self.devices[lower].free < count:
            ready = self._evict_lru(lower, count - self.devices[lower].free, protect, now)
            if ready is None:
                return None
        done_r, _ = request_latency(d, d.spec, Op.READ, count, ready)
        ld = self.devices[lower]
        done_w, _ = request_latency(ld, ld.spec, Op.WRITE, count, done_r)
        for p in victims:
            self._set_residency(p, lower)
            self.queue_drop_if_stale(p)
        self.bytes_written[lower]["eviction"] += count * PAGE_SIZE
        self.evicted_pages += count
        if self.events is not None:
            self._log(now, "RequestComplete", victims[0], lower, done_w - now)
        return done_w

    # ----------------------------------------------------------------- oracle
    def _oracle_choice(self, req: IORequest) -> int:
        # Placing on the fast device always pays off: the current request is
        # served fast, and the page pushed out (the one reused farthest in the
        # future, see _make_room) costs at most one slow access later.
        return 0

    def _on_fast_excluding(self, protect):
        pages = self.store.pages
        return lambda p: p not in protect and pages[p].curr_dev == 0

    def _oracle_move(self, page: int, dev: int) -> None:
        self._set_residency(page, dev)
        self.oracle_moves += 1

    def _oracle_demote(self, count: int, exclude: set) -> None:
        on_fast = self._on_fast_excluding(exclude)
        for _ in range(count):
            top = self.oracle.farthest_fast(on_fast)
            if top is None:
                return
            self._oracle_move(top[1], self._device_with_room(1, 1))

    def _oracle_promote_after_read(self, page: int) -> None:
        o = self.oracle
        nxt = o.future.next_use(page)
        if nxt == INF or self.store.pages[page].curr_dev == 0:
            return
        if self.fast.free < 1:
            top = o.farthest_fast(self._on_fast_excluding({page}))
            if top is None or top[0] <= nxt:
                return
            self._oracle_move(top[1], self._device_with_room(1, 1))
        self._oracle_move(page, 0)

    def _oracle_reshuffle(self) -> None:
        o = self.oracle
        pages = self.store.pages
        on_fast = lambda p: pages[p].curr_dev == 0
        on_slow = lambda p: pages[p].curr_dev not in (None, 0)
        while True:
            s = o.soonest_slow(on_slow)
            if s is None or s[0] == INF:
                return
            if self.fast.free < 1:
                f = o.farthest_fast(on_fast)
                if f is None or f[0] <= s[0]:
                    return
                self._oracle_move(f[1], self._device_with_room(1, 1))
            self._oracle_move(s[1], 0)

    # ------------------------------------------------------------- migration
    def queue_drop_if_stale(self, page: int) -> None:
        tgt = self.queue.target_of(page)
        if tgt is not None and tgt == self.store.pages[page].curr_dev:
            self.queue.remove(page)
            if self.migrator is not None:
                self.migrator.dropped(page)

    def _migrate(self, page: int, src: int, target: int, start: float,
                 read_done: float | None = None) -> float:
        s, t = self.devices[src], self.devices[target]
        if read_done is None:
            read_done, _ = request_latency(s, s.spec, Op.READ, 1, start)
        done, _ = request_latency(t, t.spec, Op.WRITE, 1, read_done)
        m = self.store.pages[page]
        acc_intr = self.store.access_interval(m)
        migr_intr = self.store.migration_interval(m)
        self._set_residency(page, target)
        self.store.record_migration(page, target)
        self.bytes_written[target]["migration"] += PAGE_SIZE
        self.migrations += 1
        self.migr_in[target] += 1
        self.migr_out[src] += 1
        self.inflight[page] = (src, done)
        if self.events is not None:
            self._log(start, "MigrationStep", page, target, done - start)
        self.migrator.migrated(page, acc_intr, migr_intr, done - start)
        return done

    def _scan(self, now: float) -> None:
        agent, queue = self.migrator, self.queue
        free = queue.free_slots
        if free <= 0 or not self.page_list:
            return
        pl = self.page_list
        w = min(self.knobs.scan_window, len(pl))
        c = self.scan_cursor
        window = pl[c:c + w]
        if len(window) < w:
            window += pl[:w - len(window)]
        self.scan_cursor = (c + w) % len(pl)
        store = self.store
        seq, mseq = store.access_seq, store.migr_seq
        pages = store.pages
        ranked = []
        for pos, p in enumerate(window):
            m = pages[p]
            ai = log_bin(seq - m.last_access_seq)
            if ai == 0 or p in queue:
                continue
            mi = log_bin(mseq - m.last_migr_seq if m.last_migr_seq is not None else mseq)
            ranked.append((-(ai + mi), pos, p))
        if not ranked:
            return
        ranked.sort()
        devices = self.devices
        has_room = lambda d: devices[d].free > 0
        for _, _, p in ranked[:free]:
            if agent.consider(p, self._page_input(p), pages[p].curr_dev, queue, has_room):
                if self.events is not None:
                    self._log(now, "ScanTick", p, queue.target_of(p))

    def _fast_path(self, page: int, read_done: float, now: float) -> None:
        """A read hit a queued page: issue its migration as a low-priority write."""
        target = self.queue.target_of(page)
        src = self.store.pages[page].curr_dev
        if target == src:
            self.queue.remove(page)
            self.migrator.dropped(page)
            return
        td = self.devices[target]
        if td.busy_until_us > now or td.free < 1:
            return
        self.queue.remove(page)
        # the page was just read, so only the write to the target is issued
        self._migrate(page, src, target, now, read_done=read_done)

    def _idle(self, now: float, next_arrival: float) -> None:
        devices = self.devices
        idle_at = max(now, max(d.busy_until_us for d in devices))
        if next_arrival <= idle_at + self.lookahead:
            return
        if self.oracle is not None:
            self._oracle_reshuffle()
            return
        agent = self.migrator
        if agent is None:
            return
        self._scan(idle_at)
        queue, pages = self.queue, self.store.pages
        clock = idle_at
        while len(queue):
            page, target = queue.peek()
            src = pages[page].curr_dev
            if src == target or devices[target].free < 1:
                queue.pop()
                agent.dropped(page)
                continue
            start = max(clock, devices[src].busy_until_us, devices[target].busy_until_us)
            if next_arrival <= start + self.lookahead:
                break
            queue.pop()
            clock = self._migrate(page, src, target, start)

    # ---------------------------------------------------------------- request
    def _serve(self, i: int, req: IORequest) -> float:
        t = float(req.arrival_us)
        store = self.store
        store.begin_request()
        first = req.page_addr
        pages = range(first, first + req.size_pages)
        obs = store.observe(first, req.op, req.size_pages, self.fast_free_fraction())
        x = to_network_input(obs)
        for p in pages:
            store.record_access(p, req.op, req.size_pages)
        if self.oracle is not None:
            self.oracle.future.advance(req)
        pm = store.pages
        placed = False
        if req.op == Op.WRITE:
            self.workload_write_bytes += req.size_pages * PAGE_SIZE
            dev = self._choose_device(req, x, pm[first])
            placed = self.spec.has_rl_placement
            dev, ready = self._make_room(dev, pages, t)
            d = self.devices[dev]
            done, _ = request_latency(d, d.spec, Op.WRITE, req.size_pages, ready)
            for p in pages:
                self._set_residency(p, dev)
                self.inflight.pop(p, None)
            self.bytes_written[dev]["placement"] += req.size_pages * PAGE_SIZE
            if len(self.queue):
                for p in pages:
                    self.queue_drop_if_stale(p)
            if self.events is not None:
                self._log(t, "RequestArrival", first, None, None)
                self._log(done, "RequestComplete", first, dev, done - t)
        else:
            cold = [p for p in pages if pm[p].curr_dev is None]
            if cold:
                dev = self._choose_device(req, x, pm[first])
                placed = self.spec.has_rl_placement
                dev, _ = self._make_room(dev, cold, t)
                for p in cold:
                    self._set_residency(p, dev)
            groups: dict[int, int] = {}
            for p in pages:
                src = pm[p].curr_dev
                fl = self.inflight.get(p)
                if fl is not None:
                    if t < fl[1]:
                        src = fl[0]
                    else:
                        del self.inflight[p]
                groups[src] = groups.get(src, 0) + 1
                if src == pm[p].curr_dev:
                    self.devices[src].resident.move_to_end(p)
            done = t
            for dev, count in groups.items():
                d = self.devices[dev]
                c, _ = request_latency(d, d.spec, Op.READ, count, t)
                done = max(done, c)
            if self.events is not None:
                self._log(t, "RequestArrival", first, None, None)
                self._log(done, "RequestComplete", first, dev, done - t)
            if self.migrator is not None and len(self.queue):
                for p in pages:
                    if p in self.queue:
                        self._fast_path(p, done, t)
            if self.oracle is not None:
                for p in pages:
                    self._oracle_promote_after_read(p)
        if self.oracle is not None:
            for p in pages:
                (self.oracle.note_fast if pm[p].curr_dev == 0 else self.oracle.note_slow)(p)
        latency = done - t
        self.latencies[i] = latency
        self.completions[i] = done
        if placed:
            self.placer.reward(latency)
        if self.migrator is not None:
            self.migrator.observe_latency(latency)
        return done

    # -------------------------------------------------------------------- run
    def run(self) -> RunResult:
        trace = self.trace
        n = len(trace)
        k = self.knobs
        scan_each = self.spec.scan_on_request and self.migrator is not None
        for i, req in enumerate(trace):
            self.request_index = i
            t = float(req.arrival_us)
            self.clock = t
            self._serve(i, req)
            if scan_each:
                self._scan(t)
            if (i + 1) % k.train_every == 0:
                for lr in self.learners:
                    loss = lr.step_training(i)
                    if loss is not None and self.events is not None:
                        self._log(t, "TrainTick", None, None, loss)
            if (i + 1) % k.sync_interval == 0:
                for lr in self.learners:
                    lr.sync()
                if self.events is not None and self.learners:
                    self._log(t, "SyncTick")
            nxt = float(trace[i + 1].arrival_us) if i + 1 < n else INF
            if nxt != INF:
                self._idle(t, nxt)
            if k.check_invariants:
                self.check_invariants()
        if self.placer is not None:
            self.placer.finish()
        if self.migrator is not None:
            self.migrator.finish()
        if k.check_invariants:
            self.check_invariants(full=True)
        return self._result()

    def _result(self) -> RunResult:
        n = len(self.trace)
        losses = {}
        stats = {}
        if self.placer is not None:
            losses["placement"] = list(self.placer.losses)
            stats["placement"] = {"decisions": self.placer.decisions,
                                  "experiences": self.placer.experiences}
        if self.migrator is not None:
            if self.spec.migration != "shared":
                losses["migration"] = list(self.migrator.losses)
            stats["migration"] = {"decisions": self.migrator.decisions,
                                  "nominations": self.migrator.nominations,
                                  "experiences": self.migrator.experiences,
                                  "zero_reward": self.migrator.zero_reward,
                                  "settled_batches": self.migrator.settled_batches}
        return RunResult(
            policy=self.spec.kind.value,
            latencies_us=self.latencies.copy(),
            first_arrival_us=float(self.trace[0].arrival_us) if n else 0.0,
            last_completion_us=float(self.completions.max()) if n else 0.0,
            workload_write_bytes=self.workload_write_bytes,
            bytes_written={d: dict(c) for d, c in self.bytes_written.items()},
            migrations=self.migrations,
            migrations_into=list(self.migr_in),
            migrations_out_of=list(self.migr_out),
            oracle_moves=self.oracle_moves,
            evicted_pages=self.evicted_pages,
            events=self.events,
            losses=losses,
            agent_stats=stats,
        )

    # ------------------------------------------------------------- invariants
    def check_invariants(self, full: bool = False) -> None:
        for idx, d in enumerate(self.devices):
            if not 0 <= d.used_pages <= d.capacity:
                raise SimulationInvariantError(
                    f"device {idx} holds {d.used_pages} of {d.capacity} pages")
            if len(d.resident) != d.used_pages:
                raise SimulationInvariantError(f"device {idx} resident/used mismatch")
        if sum(self.migr_in) != self.migrations or sum(self.migr_out) != self.migrations:
            raise SimulationInvariantError("migration in/out counts do not balance")
        for page, target in self.queue:
            if self.store.pages[page].curr_dev == target:
                raise SimulationInvariantError(f"queued page {page} already on device {target}")
        if full:
            seen: dict[int, int] = {}
            for idx, d in enumerate(self.devices):
                for p in d.resident:
                    if p in seen:
                        raise SimulationInvariantError(f"page {p} resident on two devices")
                    seen[p] = idx
            for p, m in self.store.pages.items():
                if m.curr_dev is not None and seen.get(p) != m.curr_dev:
                    raise SimulationInvariantError(f"page {p} residency disagrees with metadata")
            if len(seen) != len(self.page_list):
                raise SimulationInvariantError("placed page count mismatch")


def run(trace: Sequence[IORequest], hss: HssConfig, policy, seed: int = 42,
        knobs: Knobs | None = None, **kw) -> RunResult:
    return Engine(trace, hss, policy, seed=seed, knobs=knobs, **kw).run()
