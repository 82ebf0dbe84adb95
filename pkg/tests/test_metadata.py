import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hss_sim.metadata import (NUM_BINS, MetadataStore, Observation, cap_bin, log_bin, size_bin,
                              to_network_input)
from hss_sim.trace_io import Op


def test_fresh_write_observation():
    store = MetadataStore()
    assert store.observe(5, Op.WRITE, 1, 1.0) == Observation(1, 0, 0, 0, 7, 0, 0)


@pytest.mark.parametrize("size,expected", [(1, 0), (2, 1), (3, 1), (32, 5), (128, 7), (4096, 7)])
def test_size_bin(size, expected):
    assert size_bin(size) == expected


@pytest.mark.parametrize("v,expected", [(0, 0), (1, 0), (7, 2), (100, 6), (2**63, 63), (2**70, 63)])
def test_log_bin(v, expected):
    assert log_bin(v) == expected


@pytest.mark.parametrize("f,expected", [(0.0, 0), (0.124, 0), (0.125, 1), (0.5, 4), (1.0, 7)])
def test_cap_bin(f, expected):
    assert cap_bin(f) == expected


@given(st.integers(0, 2**64), st.integers(0, 2**64))
def test_binning_monotone(a, b):
    lo, hi = sorted((a, b))
    assert log_bin(lo) <= log_bin(hi)
    assert size_bin(max(lo, 1)) <= size_bin(max(hi, 1))


def _access(store, page, op=Op.READ, size=1):
    store.begin_request()
    return store.record_access(page, op, size)


def test_access_intervals():
    store = MetadataStore()
    m = _access(store, 3)
    assert m.acc_freq == 1 and m.acc_intr is None
    m = _access(store, 3)
    assert m.acc_intr == 1
    for _ in range(6):
        _access(store, 9)
    m = _access(store, 3)
    assert m.acc_intr == 7 and m.acc_freq == 3


@given(st.lists(st.integers(0, 6), min_size=1, max_size=200))
def test_intervals_match_replayed_log(pages):
    store = MetadataStore()
    seen: dict[int, list[int]] = {}
    for seq, p in enumerate(pages, start=1):
        m = _access(store, p)
        seen.setdefault(p, []).append(seq)
        hist = seen[p]
        assert m.acc_intr == (hist[-1] - hist[-2] if len(hist) > 1 else None)
        assert m.acc_freq == len(hist)


def test_observe_is_pure():
    store = MetadataStore()
    _access(store, 1)
    _access(store, 2)
    before = repr(store.pages), store.access_seq, store.migr_seq
    a = store.observe(1, Op.READ, 4, 0.3)
    b = store.observe(1, Op.READ, 4, 0.3)
    assert a == b
    assert (repr(store.pages), store.access_seq, store.migr_seq) == before


def test_frequency_and_device_bins():
    store = MetadataStore()
    for _ in range(100):
        _access(store, 4)
    store.record_migration(4, 1)
    obs = store.observe(4, Op.READ, 1, 0.0)
    assert obs.acc_freq_bin == 6
    assert obs.curr_dev_bin == 1
    store.record_migration(4, 0)
    assert store.observe(4, Op.READ, 1, 0.0).curr_dev_bin == 0


observations = st.builds(Observation, *[st.integers(0, n - 1) for n in NUM_BINS])


@given(observations)
def test_pack_round_trip(obs):
    word = obs.pack()
    assert 0 <= word < 2**32
    assert Observation.unpack(word) == obs


def test_pack_rejects_out_of_range():
    with pytest.raises(ValueError):
        Observation(2, 0, 0, 0, 0, 0, 0).pack()


def test_network_input():
    assert np.all(to_network_input(Observation(0, 0, 0, 0, 0, 0, 0)) == 0)
    x = to_network_input(Observation(0, 7, 0, 0, 4, 0, 0))
    assert x[1] == 1.0
    assert x[4] == pytest.approx(4 / 7)
    assert np.all(to_network_input(Observation(1, 7, 63, 63, 7, 1, 63)) == 1.0)


def test_dump_csv(tmp_path):
    store = MetadataStore()
    _access(store, 2)
    store.record_migration(2, 0)
    p = tmp_path / "m.csv"
    store.dump_csv(p)
    assert p.read_text().splitlines() == ["page,device,acc_freq,last_access_seq", "2,0,1,1"]
