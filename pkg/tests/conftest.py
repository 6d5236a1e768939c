import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

from acceptance_log import LINES as ACCEPTANCE_LINES  # noqa: E402


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: (isinstance(k, str), k)):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
