"""Shared test configuration.

The acceptance tests register one PASS/FAIL line per criterion here so the
verdicts are echoed in the terminal summary even when output capture is on.
"""

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
