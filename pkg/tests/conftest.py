"""Collects one line per acceptance criterion and prints them after the run."""
import pytest

ACCEPTANCE: list = []


@pytest.fixture
def criterion(request):
    """Call ``criterion(n, passed, detail)`` once per acceptance check; ``passed=None`` means skipped."""

    def record(number: int, passed, detail: str = ""):
        status = "SKIP" if passed is None else "PASS" if passed else "FAIL"
        ACCEPTANCE.append((number, f"criterion {number}: {status}  {detail}".rstrip()))

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE):
        terminalreporter.write_line(line)
