import pytest

_LINES: list[str] = []


@pytest.fixture
def report_criterion():
    """Record one pass/fail line per acceptance criterion; printed in the terminal summary."""

    def record(number: int, title: str, checks: dict[str, bool], details: str = "") -> None:
        status = "PASS" if all(checks.values()) else "FAIL"
        failed = [name for name, ok in checks.items() if not ok]
        line = f"criterion {number} [{status}] {title}"
        if details:
            line += f" | {details}"
        if failed:
            line += f" | failed: {', '.join(failed)}"
        _LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
