import numpy as np
import pytest

from hss_sim.devices import preset
from hss_sim.engine import Knobs, RunResult
from hss_sim.metrics import (REPORT_COLUMNS, compare, compute_report, format_reports, nearest_rank,
                             read_reports, simulate, sweep, write_loss_log, write_reports)
from hss_sim.trace_io import PAGE_SIZE, TraceProfile, generate_trace

TRACE = generate_trace(TraceProfile(0.7, 200.0, 300, hot_fraction=0.1, hot_skew=0.8), 1200, 0)
HSS = preset("perf_opt", 300)


def _result(latencies, written, workload_pages):
    return RunResult("x", np.asarray(latencies, dtype=float), 0.0, float(sum(latencies)),
                     workload_pages * PAGE_SIZE, written, 0, [0, 0], [0, 0], 0, 0, None, {})


def test_nearest_rank():
    values = np.arange(1, 101, dtype=float)
    assert nearest_rank(values, 99.0) == 99.0
    assert nearest_rank(values, 99.99) == 100.0
    assert nearest_rank(values, 100.0) == 100.0
    assert nearest_rank(np.array([]), 99.0) == 0.0
    assert nearest_rank(np.array([7.0]), 50.0) == 7.0


def test_percentiles_of_1_to_100():
    report = compute_report(_result(list(range(1, 101)), {}, 0))
    assert report.p9999_latency_us == 100.0
    assert report.p99_latency_us == 99.0


def test_wa_ratio_example():
    written = {0: {"placement": 8 * PAGE_SIZE, "eviction": 0, "migration": 0},
               1: {"placement": 0, "eviction": 0, "migration": 8 * PAGE_SIZE}}
    assert compute_report(_result([1.0, 1.0], written, 8)).write_amplification == 2.0


def test_wa_at_least_one_and_bytes_reconcile():
    for policy in ("harmonia", "sibyl", "cde"):
        report, res = simulate(TRACE, HSS, policy)
        assert report.write_amplification >= 1.0
        expected = (res.workload_write_bytes + res.migrations * PAGE_SIZE
                    + res.evicted_pages * PAGE_SIZE)
        assert report.total_bytes_written == expected
        assert report.p9999_latency_us >= report.p99_latency_us


def test_iops_uses_simulated_span():
    report = compute_report(_result([10.0, 10.0], {}, 0))
    assert report.iops == pytest.approx(2 / 20e-6)


def test_compare_normalizes_to_fast_only():
    reports = compare(TRACE, HSS, ["fast-only"])
    assert [r.policy for r in reports] == ["fast-only"]
    assert reports[0].normalized_avg_latency == 1.0
    reports = compare(TRACE, HSS, ["sibyl", "fast-only", "harmonia"])
    assert [r.policy for r in reports] == ["sibyl", "fast-only", "harmonia"]
    assert reports[1].normalized_avg_latency == 1.0
    assert all(r.normalized_avg_latency >= 1.0 for r in reports)


def test_compare_is_repeatable():
    a = format_reports(compare(TRACE, HSS, ["harmonia", "sibyl"], seed=3))
    b = format_reports(compare(TRACE, HSS, ["harmonia", "sibyl"], seed=3))
    assert a == b


def test_sweep_counts():
    small = TRACE[:300]
    assert len(sweep(small, HSS, "harmonia", "queue_size", [0, 1, 5, 10, 20, 50])) == 6
    reports = sweep(small, HSS, "harmonia", "n", [5, 10, 50, 100, 250])
    assert len(reports) == 5
    with pytest.raises(ValueError, match="valid knobs"):
        sweep(small, HSS, "harmonia", "bogus", [1])


def test_sweep_threads_match_serial(monkeypatch):
    small = TRACE[:300]
    monkeypatch.setenv("HSS_SIM_THREADS", "1")
    serial = format_reports(sweep(small, HSS, "harmonia", "queue_size", [0, 10]))
    monkeypatch.setenv("HSS_SIM_THREADS", "2")
    threaded = format_reports(sweep(small, HSS, "harmonia", "queue_size", [0, 10]))
    assert serial == threaded


def test_report_csv_round_trip(tmp_path):
    report, _ = simulate(TRACE[:200], HSS, "cde")
    path = tmp_path / "r.csv"
    write_reports(path, [report])
    rows = read_reports(path)
    assert list(rows[0]) == list(REPORT_COLUMNS)
    assert float(rows[0]["avg_latency_us"]) == report.avg_latency_us
    assert rows[0]["norm_avg_latency"] == ""


def test_loss_log(tmp_path):
    report, _ = simulate(TRACE, HSS, "harmonia", knobs=Knobs(num_atoms=1))
    path = tmp_path / "loss.csv"
    write_loss_log(path, report)
    lines = path.read_text().splitlines()
    assert lines[0] == "agent,request_index,loss"
    assert len(lines) - 1 == sum(len(s) for s in report.training_loss_series.values())
