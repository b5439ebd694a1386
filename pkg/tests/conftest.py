from __future__ import annotations

import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

_RESULTS: dict[int, tuple[str, bool]] = {}
_NOTES: dict[int, list[str]] = {}


@pytest.fixture
def note(request):
    """Attach a measured value to the acceptance summary line of this test's criterion."""
    marker = request.node.get_closest_marker("criterion")

    def add(text: str) -> None:
        if marker is not None:
            _NOTES.setdefault(marker.args[0], []).append(text)

    return add


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    n, title = marker.args
    ok = report.passed if report.when == "call" else not report.failed
    if report.when == "setup" and ok:
        return
    prev = _RESULTS.get(n, (title, True))[1]
    _RESULTS[n] = (title, prev and ok)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        title, ok = _RESULTS[n]
        notes = "; ".join(_NOTES.get(n, []))
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  [{notes}]" if notes else ""))
