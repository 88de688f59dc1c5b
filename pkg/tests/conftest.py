import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    rep = (yield).get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.failed:
        status = "FAIL"
    elif rep.skipped:
        status = "SKIP"
    elif rep.when == "call":
        status = "PASS"
    else:
        return
    detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
    rank = {"PASS": 0, "SKIP": 1, "FAIL": 2}
    for n in marker.args:
        prev = _CRITERIA.get(n, [])
        _CRITERIA[n] = prev + [(status, item.name, detail)]
        _CRITERIA[n].sort(key=lambda e: -rank[e[0]])


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        entries = _CRITERIA[n]
        status = entries[0][0]
        parts = " | ".join(f"{name}: {detail}" if detail else name for _, name, detail in entries)
        tr.write_line(f"criterion {n:2d}: {status}  {parts}")
