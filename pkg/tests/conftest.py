import numpy as np
import pytest

_criteria = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    for key, value in report.user_properties:
        if key == "criterion":
            number, title = value
            details = [f"{k}={v}" for k, v in report.user_properties if k != "criterion"]
            _criteria[number] = (title, report.outcome, report.duration, details)


@pytest.fixture(autouse=True)
def _criterion_properties(request, record_property):
    marker = request.node.get_closest_marker("criterion")
    if marker is not None:
        record_property("criterion", marker.args)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, outcome, duration, details = _criteria[number]
        verdict = "PASS" if outcome == "passed" else "SKIP" if outcome == "skipped" else "FAIL"
        line = f"criterion {number}: {verdict}  {title}  ({duration:.1f} s)"
        if details:
            line += "  " + " ".join(details)
        terminalreporter.write_line(line)
