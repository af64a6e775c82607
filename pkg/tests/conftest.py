"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""
import pytest

_RESULTS = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, label = marker.args
    failed = report.failed
    passed = report.when == "call" and report.passed
    prev = _RESULTS.get(number, (label, None))[1]
    if failed:
        _RESULTS[number] = (label, False)
    elif passed and prev is not False:
        _RESULTS[number] = (label, True)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        label, ok = _RESULTS[number]
        status = {True: "PASS", False: "FAIL", None: "NOT RUN"}[ok]
        terminalreporter.write_line(f"criterion {number:2d}  {status:7s} {label}")
