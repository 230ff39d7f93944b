import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

CRITERION_LINES: list[str] = []


def record_criterion(number: int, passed: bool, description: str):
    verdict = "PASS" if passed else "FAIL"
    CRITERION_LINES.append(f"criterion {number}: {verdict} - {description}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not CRITERION_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(CRITERION_LINES):
        terminalreporter.write_line(line)
