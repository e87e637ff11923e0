"""Collects outcomes of tests marked ``criterion(n, title)`` and prints one line per criterion."""

import pytest

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion a test belongs to")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        number, title = marker.args
        entry = _CRITERIA.setdefault(number, {"title": title, "results": []})
        entry["results"].append((item.name, report.passed))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        results = entry["results"]
        ok = all(passed for _, passed in results)
        failed = [name for name, passed in results if not passed]
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {entry['title']}"
        if failed:
            line += f"  (failing: {', '.join(failed)})"
        terminalreporter.write_line(line)
