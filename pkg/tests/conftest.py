"""Shared pytest plumbing.

The acceptance suite records one line per criterion through
record_acceptance; the terminal-summary hook prints them after the run,
outside stdout capture, so the pass/fail ledger is always visible.
"""

ACCEPTANCE_LINES = []


def record_acceptance(line):
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
