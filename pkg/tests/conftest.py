import pytest

_LINES = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line: criterion(n, ok, detail)."""
    def record(n, ok, detail=""):
        _LINES[n] = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok
    return record


def pytest_runtest_logreport(report):
    # a criterion whose test errored or was skipped before recording still gets a line
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.rsplit("::", 1)[-1]
        if name.startswith("test_criterion_"):
            n = int(name.split("_")[2])
            if n not in _LINES:
                tag = "SKIP" if report.skipped else "FAIL"
                _LINES[n] = f"criterion {n:>2}: {tag}  (no result recorded)"


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance")
        for n in sorted(_LINES):
            terminalreporter.write_line(_LINES[n])
