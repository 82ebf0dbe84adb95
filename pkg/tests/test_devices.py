import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hss_sim.devices import (DEVICE_CLASSES, PRESETS, DeviceSpec, DeviceState, HssConfig, preset,
                             request_latency, scaled_capacities, service_time, speed_score)
from hss_sim.trace_io import Op


def spec(**kw):
    base = dict(name="d", capacity_pages=10, read_base_us=10.0, write_base_us=10.0,
                read_bw_mbps=2400.0, write_bw_mbps=2000.0)
    base.update(kw)
    return DeviceSpec(**base)


def test_write_one_page_formula():
    assert service_time(spec(), Op.WRITE, 1) == pytest.approx(10 + 4096 / 2097.152)
    assert service_time(spec(), Op.WRITE, 1) == pytest.approx(11.953125)


def test_high_end_read_uses_read_bandwidth():
    h = DEVICE_CLASSES["H"]
    assert service_time(h, Op.READ, 4) == pytest.approx(10 + 4 * 4096 / (2400 * 1.048576))


def test_iops_floor():
    s = spec(read_base_us=0.0, read_bw_mbps=1e9, max_iops=500_000)
    assert service_time(s, Op.READ, 1) == pytest.approx(2.0)


def test_write_iops_falls_back_to_max_iops():
    s = spec(write_base_us=0.0, write_bw_mbps=1e9, max_iops=100_000)
    assert service_time(s, Op.WRITE, 1) == pytest.approx(10.0)
    s2 = spec(write_base_us=0.0, write_bw_mbps=1e9, max_iops=100_000, write_max_iops=1000)
    assert service_time(s2, Op.WRITE, 1) == pytest.approx(1000.0)


@pytest.mark.parametrize("kw", [dict(capacity_pages=0), dict(read_bw_mbps=0.0),
                                dict(write_bw_mbps=-1.0), dict(read_base_us=-1.0),
                                dict(max_iops=0)])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        spec(**kw)


def test_idle_device_latency_is_service_time():
    st_ = DeviceState()
    s = spec()
    done, busy = request_latency(st_, s, Op.READ, 1, 100.0)
    assert done - 100.0 == pytest.approx(service_time(s, Op.READ, 1))
    assert busy == done == st_.busy_until_us


def test_busy_device_queues():
    s = spec(read_base_us=50.0, read_bw_mbps=1e12)
    st_ = DeviceState(busy_until_us=500.0)
    done, _ = request_latency(st_, s, Op.READ, 1, 100.0)
    assert done == pytest.approx(550.0)
    assert done - 100.0 == pytest.approx(450.0)


def test_back_to_back_schedule():
    # hand-computed: write 1 page = 11.953125 us; both arrive at t=0
    s = spec()
    st_ = DeviceState()
    d1, _ = request_latency(st_, s, Op.WRITE, 1, 0.0)
    d2, _ = request_latency(st_, s, Op.WRITE, 1, 0.0)
    assert d1 == pytest.approx(11.953125)
    assert d2 == pytest.approx(23.90625)


@given(st.integers(1, 512), st.integers(1, 512), st.floats(1.0, 1e4), st.floats(1.0, 1e4))
def test_monotonicity(a, b, bw1, bw2):
    lo, hi = sorted((a, b))
    s = spec(read_bw_mbps=bw1)
    assert service_time(s, Op.READ, lo) <= service_time(s, Op.READ, hi)
    slow, fast = sorted((bw1, bw2))
    assert service_time(spec(read_bw_mbps=fast), Op.READ, a) <= \
        service_time(spec(read_bw_mbps=slow), Op.READ, a)


@given(st.lists(st.tuples(st.floats(0, 200), st.sampled_from(list(Op)), st.integers(1, 16)),
                min_size=1, max_size=30))
def test_work_conservation(reqs):
    s = DEVICE_CLASSES["M"]
    state = DeviceState()
    t, total, first_start, last = 0.0, 0.0, None, 0.0
    for dt, op, size in reqs:
        t += dt
        start = max(t, state.busy_until_us)
        first_start = start if first_start is None else first_start
        last, _ = request_latency(state, s, op, size, t)
        total += service_time(s, op, size)
    assert total <= last - first_start + 1e-6


def test_presets():
    assert [d.name for d in preset("perf_opt").devices] == ["H", "M"]
    assert [d.name for d in preset("quad_hss").devices] == ["H", "M", "L_SSD", "L"]
    for name in PRESETS:
        hss = preset(name, 1000)
        scores = [speed_score(d) for d in hss.devices]
        assert all(scores[0] < s for s in scores[1:])
        assert hss.devices[0].capacity_pages == 100
        assert hss.devices[-1].capacity_pages == 1000


def test_unknown_preset():
    with pytest.raises(ValueError):
        preset("nope")


def test_scaled_capacities():
    assert scaled_capacities(4, 1000, 0.1) == [100, 200, 400, 1000]
    assert scaled_capacities(2, 7, 0.1) == [1, 7]
    assert scaled_capacities(2, 15, 0.1)[0] == math.ceil(1.5)


def test_hss_ordering_and_count():
    h, m = DEVICE_CLASSES["H"], DEVICE_CLASSES["M"]
    with pytest.raises(ValueError):
        HssConfig((m, h))
    with pytest.raises(ValueError):
        HssConfig((h,))
    with pytest.raises(ValueError):
        HssConfig(tuple(spec(name=str(i), read_base_us=float(i)) for i in range(17)))
    assert HssConfig((h, m)).fast_device_index == 0
