import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

_LINES: list[str] = []
_START = time.perf_counter()


class Criterion:
    """Collects one PASS/FAIL line per acceptance criterion."""

    def report(self, number: int, name: str, passed: bool, detail: str, seconds: float, limit: float):
        within = seconds < limit
        ok = passed and within
        line = (
            f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {name}: {detail}"
            f"  [{seconds:.2f} s, limit {limit:g} s{'' if within else ' EXCEEDED'}]"
        )
        _LINES.append(line)
        print(line)
        return ok


@pytest.fixture
def criterion():
    return Criterion()


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_LINES):
        terminalreporter.write_line(line)
    terminalreporter.write_line(f"session wall time {time.perf_counter() - _START:.1f} s (limit 300 s)")
