import pytest

_outcomes: dict[int, tuple[str, list[str]]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _, failures = _outcomes.setdefault(number, (title, []))
        if report.outcome != "passed":
            failures.append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_outcomes):
        title, failures = _outcomes[number]
        status = "PASS" if not failures else "FAIL (" + ", ".join(failures) + ")"
        terminalreporter.write_line(f"criterion {number:2d}  {status:5s}  {title}")
