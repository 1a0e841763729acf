"""Shared fixtures and the acceptance-suite result banner.

The acceptance tests (tests/test_acceptance.py) each carry a `criterion`
marker; after the run a one-line PASS/FAIL verdict per criterion is printed so
the gate can be read off the bottom of the log without scrolling through
pytest's own output.
"""

import numpy as np
import pytest

_ACCEPTANCE_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(n, title): acceptance criterion metadata")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker and report.when == "call":
        n, title = marker.args
        _ACCEPTANCE_RESULTS[n] = (title, report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE_RESULTS):
        title, outcome = _ACCEPTANCE_RESULTS[n]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[criterion {n:2d}] {verdict}  {title}")


@pytest.fixture
def rng():
    return np.random.default_rng(0)
