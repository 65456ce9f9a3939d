"""Collects acceptance-criterion outcomes and prints them after the run."""

import pytest

ACCEPTANCE: dict[str, tuple[str, str]] = {}


@pytest.fixture
def record_criterion():
    """Call with (key, passed, detail); ``passed`` may be True, False or None for report-only."""

    def record(key: str, passed, detail: str) -> None:
        status = "REPORT" if passed is None else ("PASS" if passed else "FAIL")
        ACCEPTANCE[key] = (status, detail)

    return record


def pytest_runtest_logreport(report):
    # a criterion whose test errored or was skipped before recording still gets a line
    if report.when in ("setup", "call") and "test_acceptance.py" in report.nodeid:
        key = report.nodeid.split("::")[-1]
        if report.skipped and key not in ACCEPTANCE:
            reason = report.longrepr[2] if isinstance(report.longrepr, tuple) else "skipped"
            ACCEPTANCE[key] = ("SKIP", str(reason).removeprefix("Skipped: "))
        elif report.failed and key not in ACCEPTANCE:
            ACCEPTANCE[key] = ("FAIL", "test raised before recording a result")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{status:6} {key}: {detail}")
