import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import re

_acceptance: dict[int, str] = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", report.nodeid)
    if m and (report.when == "call" or report.outcome != "passed"):
        n = int(m.group(1))
        if report.when == "call" or n not in _acceptance:
            _acceptance[n] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if _acceptance:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_acceptance):
            terminalreporter.write_line(f"criterion {n:2d}: {_acceptance[n]}")
