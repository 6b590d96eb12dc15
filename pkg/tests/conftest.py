import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))


def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance as acc  # noqa: PLC0415

    if acc.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(acc.RESULTS):
            terminalreporter.write_line(line)
