"""Per-criterion reporting for the acceptance suite.

``test_acceptance`` records one PASS/FAIL entry per exit criterion; the
terminal-summary hook prints them after capture is released so every run
ends with one line per criterion.
"""

ACCEPTANCE_RESULTS: list[tuple[str, str]] = []


def record_criterion(name: str, status: str) -> None:
    ACCEPTANCE_RESULTS.append((name, status))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for name, status in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(f"{status}  {name}")
