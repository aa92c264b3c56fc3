import pytest

_criteria_results = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(num, desc): tie a test to one acceptance criterion"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None and report.when == "call":
        num, desc = marker.args
        _criteria_results[num] = (desc, report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _criteria_results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria_results):
        desc, passed = _criteria_results[num]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {num:2d} {status}  {desc}")
