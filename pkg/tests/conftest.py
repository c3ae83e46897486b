from collections import OrderedDict

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_CRITERIA: "OrderedDict[str, dict]" = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(code, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.when != "call":
        return
    code, title = mark.args
    entry = _CRITERIA.setdefault(code, {"title": title, "ok": True, "details": []})
    entry["ok"] &= report.passed
    for name, value in item.user_properties:
        if name == "detail":
            entry["details"].append(value)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for code, entry in _CRITERIA.items():
        status = "PASS" if entry["ok"] else "FAIL"
        terminalreporter.write_line(f"{code} {status}  {entry['title']}")
        for detail in entry["details"]:
            terminalreporter.write_line(f"      {detail}")
