"""Collects one PASS/FAIL line per acceptance criterion and prints them at the end of the run."""

import pytest

_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")
    config.stash[_KEY] = {}


@pytest.fixture
def record(request):
    """``record(passed, detail)`` stores the outcome of the current criterion."""
    marker = request.node.get_closest_marker("criterion")
    results = request.config.stash[_KEY]

    def _record(passed, detail):
        results[marker.args[0]] = (bool(passed), detail)
        return passed

    return _record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call":
        return
    results = item.config.stash[_KEY]
    n = marker.args[0]
    if rep.failed and n not in results:
        results[n] = (False, f"error: {call.excinfo.typename}: {call.excinfo.value}")
    elif rep.failed and results[n][0]:
        results[n] = (False, results[n][1] + " (assertion failed)")


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash[_KEY]
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        passed, detail = results[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
