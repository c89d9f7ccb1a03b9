import pytest

_results: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    num, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        prev = _results.get(num, ("PASS", title))[0]
        status = "PASS" if rep.passed and prev == "PASS" else "FAIL"
        _results[num] = (status, title)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_results):
        status, title = _results[num]
        terminalreporter.write_line(f"criterion {num:2d} [{status}] {title}")
