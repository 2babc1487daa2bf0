"""Shared test plumbing: the acceptance-criteria result banner.

test_acceptance.py records one verdict per criterion; the terminal
summary prints them as single PASS/FAIL lines so the final pytest output
carries the acceptance scorecard verbatim.
"""

_acceptance_results: dict[int, tuple[str, bool, str]] = {}


def record_criterion(number: int, description: str, passed: bool,
                     detail: str = "") -> None:
    _acceptance_results[number] = (description, passed, detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance_results):
        description, passed, detail = _acceptance_results[number]
        status = "PASS" if passed else "FAIL"
        line = f"criterion {number:>2}: {status} - {description}"
        if detail:
            line += f" [{detail}]"
        terminalreporter.write_line(line)
