import numpy as np
import pytest

from hss_sim.devices import DeviceSpec, HssConfig, preset, service_time
from hss_sim.engine import KNOB_ALIASES, Engine, Knobs, SimulationInvariantError, resolve_knob
from hss_sim.metrics import compute_report, simulate
from hss_sim.rl import Hyperparameters
from hss_sim.trace_io import PAGE_SIZE, IORequest, Op, TraceProfile, generate_trace

HSS = HssConfig((DeviceSpec("f", 8, 10, 10, 2000, 2000), DeviceSpec("s", 16, 80, 80, 500, 500)))
FIXED = Hyperparameters(num_atoms=1, epsilon=0.0, random_warmup=False)
FAST_READ = service_time(HSS.devices[0], Op.READ, 1)
SLOW_READ = service_time(HSS.devices[1], Op.READ, 1)


def _fix(net, action):
    net.w2[...] = 0
    net.b2[...] = 0
    net.b2[action] = 1.0


class ScriptedEngine(Engine):
    """Writes go to the slow device; after request ``enqueue_at`` the
    scanner nominates ``pages`` for promotion, and never scans otherwise."""

    def __init__(self, trace, pages, enqueue_at, **kw):
        knobs = Knobs(num_atoms=1, training=False, check_invariants=True, record_events=True)
        super().__init__(trace, HSS, "harmonia", knobs=knobs, placement_hp=FIXED,
                         migration_hp=FIXED, **kw)
        _fix(self.placer.inference, 1)
        _fix(self.migrator.inference, 0)
        self.to_enqueue, self.enqueue_at = pages, enqueue_at

    def _scan(self, now):
        if self.request_index == self.enqueue_at and self.to_enqueue:
            for p in self.to_enqueue:
                assert self.migrator.consider(p, self._page_input(p), self.store.pages[p].curr_dev,
                                              self.queue, lambda d: True)
            self.to_enqueue = None


def _writes(n, gap=1.0):
    return [IORequest(int(i * gap), Op.WRITE, i, 1) for i in range(n)]


def test_empty_trace():
    report = compute_report(Engine([], HSS, "harmonia").run())
    assert report.requests == 0 and report.write_amplification == 1.0


def test_single_write_fast_only():
    res = Engine([IORequest(0, Op.WRITE, 0, 1)], HSS, "fast-only").run()
    assert res.latencies_us[0] == pytest.approx(service_time(HSS.devices[0], Op.WRITE, 1))


def test_idle_drain_migrates_queue():
    trace = _writes(6) + [IORequest(1_000_000, Op.READ, 5, 1)]
    eng = ScriptedEngine(trace, [0, 1, 2], enqueue_at=5)
    res = eng.run()
    assert res.migrations == 3 and res.migrations_into == [3, 0]
    assert len(eng.queue) == 0
    # migration traffic counts toward WA but not toward request latency
    assert res.bytes_written[0]["migration"] == 3 * PAGE_SIZE
    assert compute_report(res).write_amplification == pytest.approx(9 / 6)
    assert res.latencies_us[-1] == pytest.approx(SLOW_READ)


def test_request_preempts_drain():
    # last write completes at 587.8 us; one promotion takes about 100 us
    trace = _writes(6, gap=100.0) + [IORequest(700, Op.READ, 5, 1)]
    eng = ScriptedEngine(trace, [0, 1, 2], enqueue_at=5)
    res = eng.run()
    assert res.migrations == 1
    assert [p for p, _ in eng.queue] == [1, 2]


def test_fast_path_on_read_of_queued_page():
    trace = _writes(6) + [IORequest(6, Op.READ, 1, 1)]
    eng = ScriptedEngine(trace, [0, 1, 2], enqueue_at=5)
    res = eng.run()
    steps = [e for e in res.events if e[1] == "MigrationStep"]
    assert [e[2] for e in steps] == [1]
    assert steps[0][0] == 6.0
    assert res.bytes_written[0]["migration"] == PAGE_SIZE
    assert 1 not in eng.queue


def test_read_of_unqueued_page_has_no_effect():
    trace = _writes(6) + [IORequest(6, Op.READ, 4, 1)]
    res = ScriptedEngine(trace, [0, 1, 2], enqueue_at=5).run()
    assert res.migrations == 0


def _random_trace(seed, n=3000, gap=40.0):
    prof = TraceProfile(0.6, gap, 300, ((1, 0.6), (4, 0.3), (16, 0.1)), hot_fraction=0.1,
                        hot_skew=0.8)
    return generate_trace(prof, n, seed)


def test_queue_zero_means_no_migrations():
    tr = _random_trace(0)
    for policy in ("harmonia", "harmonia-nocoord", "cde-rl-migr", "sapm"):
        _, res = simulate(tr, preset("perf_opt", 300), policy, knobs=Knobs(migration_queue_size=0))
        assert res.migrations == 0


@pytest.mark.parametrize("policy", ["harmonia", "harmonia-nocoord", "sibyl", "cde", "cde-rl-migr",
                                    "sapm", "oracle", "fast-only"])
def test_invariants_and_determinism(policy):
    tr = _random_trace(3)
    hss = preset("tri_hss", 300)
    knobs = Knobs(check_invariants=True, record_events=True)
    a = Engine(tr, hss, policy, seed=5, knobs=knobs).run()
    b = Engine(tr, hss, policy, seed=5, knobs=knobs).run()
    assert np.array_equal(a.latencies_us, b.latencies_us)
    assert a.events == b.events
    assert sum(a.migrations_into) == sum(a.migrations_out_of) == a.migrations


@pytest.mark.parametrize("policy", ["harmonia", "sibyl"])
def test_latency_replay_from_event_log(policy):
    tr = _random_trace(4, n=1500)
    res = Engine(tr, preset("perf_opt", 300), policy, knobs=Knobs(record_events=True)).run()
    ev = res.events
    replayed = [ev[j + 1][0] - ev[j][0] for j, e in enumerate(ev) if e[1] == "RequestArrival"]
    assert all(ev[j + 1][1] == "RequestComplete" for j, e in enumerate(ev)
               if e[1] == "RequestArrival")
    assert len(replayed) == len(tr)
    assert sum(replayed) == pytest.approx(float(res.latencies_us.sum()))


def test_invariant_checker_catches_corruption():
    eng = Engine(_writes(4), HSS, "fast-only")
    eng.run()
    eng.devices[0].used_pages += 1
    with pytest.raises(SimulationInvariantError):
        eng.check_invariants()


def test_sibyl_eviction_goes_to_next_tier():
    tr = _random_trace(5, n=2000)
    _, res = simulate(tr, preset("tri_hss", 300), "sibyl")
    assert res.evicted_pages > 0
    assert res.bytes_written[1]["eviction"] > 0


def test_training_and_sync_cadence():
    tr = _random_trace(6, n=2000)
    knobs = Knobs(train_every=10, sync_interval=500, record_events=True)
    res = Engine(tr, preset("perf_opt", 300), "harmonia", knobs=knobs).run()
    syncs = [e for e in res.events if e[1] == "SyncTick"]
    assert len(syncs) == 4
    idx = [i for i, _ in res.losses["placement"]]
    assert all((i + 1) % 10 == 0 for i in idx)


def test_knob_resolution():
    assert resolve_knob("queue_size") == "migration_queue_size"
    assert all(resolve_knob(a) == t for a, t in KNOB_ALIASES.items())
    with pytest.raises(ValueError, match="valid knobs"):
        resolve_knob("warp_speed")
    with pytest.raises(ValueError):
        Knobs(migration_queue_size=-1)
