"""Shared fixtures and the per-criterion acceptance summary."""
from __future__ import annotations

import numpy as np
import pytest

from hdmf.datasets import make_planted_folksonomy
from hdmf.folksonomy import split_assignments

_ACCEPTANCE_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    results = item.config.stash[_ACCEPTANCE_KEY]
    cid = marker.kwargs["id"]
    if report.when == "call" or (report.when == "setup" and not report.passed):
        if report.skipped:
            status = "NOT RUN"
            reason = report.longrepr[2] if isinstance(report.longrepr, tuple) else str(report.longrepr)
            detail = reason.removeprefix("Skipped: ")
        else:
            status = "PASS" if report.passed else "FAIL"
            detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
        results[cid] = (marker.kwargs["title"], status, detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_ACCEPTANCE_KEY, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(results):
        title, status, detail = results[cid]
        line = f"[{status:>7}] criterion {cid}: {title}"
        if detail:
            line += f" -- {detail}"
        terminalreporter.write_line(line)


@pytest.fixture
def record(request):
    """Attach a detail string to the acceptance summary line of this test."""
    def _record(text):
        request.node.user_properties.append(("detail", text))
    return _record


@pytest.fixture(scope="session")
def planted():
    return make_planted_folksonomy(seed=0)


@pytest.fixture(scope="session")
def planted_split(planted):
    return split_assignments(planted, (0.8, 0.05, 0.15), seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
