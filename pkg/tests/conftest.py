"""Shared test plumbing: collect acceptance PASS/FAIL lines and echo them
in the terminal summary (pytest captures per-test stdout otherwise)."""

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
