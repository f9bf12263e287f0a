import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one acceptance verdict line; echoed again in the terminal summary."""

    def _report(criterion: str, passed: bool, detail: str) -> None:
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
