import os
import sys

import pytest

# Shared reference-solution cache so the Allen-Cahn solve happens once.
os.environ.setdefault("GPINN_CACHE", "/tmp/gpinn_cache")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running reference/benchmark checks")
    config.addinivalue_line("markers", "acceptance: full acceptance-criteria runs")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "_LINES", None) if mod else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
