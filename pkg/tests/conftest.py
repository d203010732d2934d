import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "seeded",
    derandomize=True,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large, HealthCheck.filter_too_much],
    print_blob=True,
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "seeded"))

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    num, title = marker.args
    entry = _criteria.setdefault(num, {"title": title, "passed": True, "notes": []})
    entry["passed"] = entry["passed"] and rep.passed
    for key, val in item.user_properties:
        entry["notes"].append(f"{key}={val}")
    if rep.failed:
        entry["notes"].append(f"FAILED {item.name}")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        e = _criteria[num]
        status = "PASS" if e["passed"] else "FAIL"
        notes = "; ".join(e["notes"])
        terminalreporter.write_line(f"criterion {num} [{status}] {e['title']}" + (f" :: {notes}" if notes else ""))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
