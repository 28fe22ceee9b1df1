import re

import pytest

# criterion number -> (passed, detail); filled by the acceptance tests
CRITERIA: dict[int, list] = {}
_NAME = re.compile(r"test_criterion_(\d+)")


@pytest.fixture
def criterion_detail(request):
    """Attach a one-line detail to the current criterion's summary line."""
    m = _NAME.match(request.node.name)

    def note(text):
        CRITERIA.setdefault(int(m.group(1)), [None, ""])[1] = text

    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    m = _NAME.match(item.name)
    if not m:
        return
    entry = CRITERIA.setdefault(int(m.group(1)), [None, ""])
    if report.when == "call":
        entry[0] = report.passed
    elif report.failed:
        entry[0] = False


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        passed, detail = CRITERIA[n]
        status = "NOT RUN" if passed is None else ("PASS" if passed else "FAIL")
        line = f"CRITERION {n}: {status}"
        terminalreporter.write_line(f"{line} ({detail})" if detail else line)
