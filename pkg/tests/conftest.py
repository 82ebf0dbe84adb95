import pytest

CRITERIA = {
    1: "RL math oracles",
    2: "placement loss convergence",
    3: "adaptation after phase changes",
    4: "coordination benefit",
    5: "proactive prefetch",
    6: "queue-size sensitivity",
    7: "ordering sanity",
    8: "write amplification direction",
    9: "determinism",
    10: "invariant suite",
}

_results_key = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_results_key] = {}


@pytest.fixture
def record(request):
    """``record(criterion, passed, detail)`` for the end-of-run summary."""
    results = request.config.stash[_results_key]

    def _record(criterion: int, passed: bool, detail: str) -> None:
        results[criterion] = (bool(passed), detail)

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash[_results_key]
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num, name in CRITERIA.items():
        if num in results:
            passed, detail = results[num]
            status = "PASS" if passed else "FAIL"
        else:
            status, detail = "NOT RUN", ""
        terminalreporter.write_line(f"criterion {num:>2} {status:<7} {name}: {detail}")
