import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    num, title = mark.args
    details = [v for k, v in item.user_properties if k == "detail"]
    prev = _RESULTS.get(num, (title, True, []))
    _RESULTS[num] = (title, prev[1] and rep.passed, prev[2] + details)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(_RESULTS):
        title, ok, details = _RESULTS[num]
        tr.write_line(f"criterion {num:2d} {'PASS' if ok else 'FAIL'}  {title}: {'; '.join(details)}")
