import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_CRITERIA = {}


def three_sigma(est, se, target, floor=0.0):
    """|est - target| within three standard errors (``floor`` guards se = 0)."""
    return abs(est - target) <= 3 * max(se, floor)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    if rep.failed or (rep.when == "call"):
        prev = _CRITERIA.get(number, (title, "PASS"))
        _CRITERIA[number] = (title, "FAIL" if rep.failed or prev[1] == "FAIL" else "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}  {status}  {title}")
