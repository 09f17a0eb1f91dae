"""Acceptance reporting: one PASS/FAIL line per numbered criterion.

Tests opt in with ``@pytest.mark.criterion(n, "title")`` and may attach
result lines through ``record_property("detail", text)``.
"""
import os

import pytest

# one BLAS thread so timings match a single-core budget
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

_titles: dict[int, str] = {}
_outcomes: dict[int, list[bool]] = {}
_details: dict[int, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): numbered acceptance criterion")


def _criterion(item):
    m = item.get_closest_marker("criterion")
    return None if m is None else m.args


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    crit = _criterion(item)
    if crit is None:
        return
    n, title = crit
    _titles[n] = title
    if report.when == "call" or (report.when == "setup" and report.failed):
        _outcomes.setdefault(n, []).append(report.passed)
        if report.when == "call":
            _details.setdefault(n, []).extend(str(v) for k, v in report.user_properties if k == "detail")


def pytest_terminal_summary(terminalreporter):
    if not _titles:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_titles):
        runs = _outcomes.get(n, [])
        status = "NOT RUN" if not runs else "PASS" if all(runs) else "FAIL"
        tr.write_line(f"criterion {n}: {status}  {_titles[n]}")
        for d in _details.get(n, []):
            for line in d.splitlines():
                tr.write_line(f"    {line}")
