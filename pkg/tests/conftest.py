from __future__ import annotations

import pytest

from bouncelab.forcing import ForcingProfile
from bouncelab.impact_map import MapParams
from bouncelab.variational import GeneratingContext


@pytest.fixture(scope="session")
def small_params() -> MapParams:
    return MapParams(ForcingProfile.single_cosine(0.01), g=1.0)


@pytest.fixture(scope="session")
def flat_params() -> MapParams:
    return MapParams(ForcingProfile.zero(), g=1.0)


@pytest.fixture(scope="session")
def small_ctx(small_params) -> GeneratingContext:
    return GeneratingContext(small_params)


@pytest.fixture(scope="session")
def flat_ctx(flat_params) -> GeneratingContext:
    return GeneratingContext(flat_params)


_CRITERIA: list[tuple[int, str, str, float]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    if hasattr(report, "wasxfail"):
        status = "XFAIL"
    else:
        status = "PASS" if report.passed else "FAIL"
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    _CRITERIA.append((marker.args[0], f"{item.name}: {detail}" if detail else item.name, status, report.duration))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, status, duration in sorted(_CRITERIA, key=lambda c: c[0]):
        terminalreporter.write_line(f"criterion {number}: {status:5s} ({duration:6.2f} s) {name}")
