"""Print collected acceptance verdict lines after capture ends."""

import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = []
    for mod in list(sys.modules.values()):
        registry = getattr(mod, "ACCEPTANCE_VERDICTS", None)
        if isinstance(registry, list) and registry:
            lines.extend(registry)
            registry.clear()
    if lines:
        terminalreporter.section("acceptance verdicts")
        for line in lines:
            terminalreporter.write_line(line)
