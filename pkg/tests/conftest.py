import pytest

# criterion number -> [title, passed, ran]
_CRITERIA: dict[int, list] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    entry = _CRITERIA.setdefault(number, [title, True, False])
    if rep.failed:
        entry[1] = False
    if rep.when == "call" and not rep.skipped:
        entry[2] = True


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, passed, ran = _CRITERIA[number]
        verdict = "PASS" if passed and ran else ("FAIL" if ran or not passed else "SKIP")
        terminalreporter.write_line(f"criterion {number:2d}: {verdict}  {title}")
