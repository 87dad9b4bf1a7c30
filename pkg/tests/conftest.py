"""Shared test plumbing: the acceptance gate's summary reporter.

Acceptance tests register one verdict each; the hook prints them as a
block at the end of the run so every criterion gets its own PASS/FAIL
line regardless of output capturing.
"""

ACCEPTANCE_RESULTS: list[tuple[int, str, bool, str]] = []


def record_criterion(number: int, name: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE_RESULTS.append((number, name, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(ACCEPTANCE_RESULTS):
        verdict = "PASS" if passed else "FAIL"
        line = f"criterion {number:2d} [{verdict}] {name}"
        if detail:
            line += f" | {detail}"
        terminalreporter.write_line(line)
