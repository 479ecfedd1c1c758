"""Shared bookkeeping for the acceptance suite: every acceptance test
records a verdict so the run ends with one pass/fail line per criterion,
even when a test aborts half way."""

RESULTS = {}


def record(number: int, description: str, passed: bool) -> None:
    RESULTS[number] = (description, bool(passed))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(RESULTS):
        desc, ok = RESULTS[num]
        verdict = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {num}: {verdict} - {desc}")
