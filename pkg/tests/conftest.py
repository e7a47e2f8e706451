import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def criterion():
    """Record one acceptance verdict; the line is printed and repeated in the summary."""

    def record(number: int, ok: bool, detail: str, elapsed: float | None = None,
               budget: float | None = None) -> None:
        in_time = budget is None or elapsed is None or elapsed < budget
        verdict = "PASS" if ok and in_time else "FAIL"
        timing = ""
        if elapsed is not None:
            timing = f" [{elapsed:.1f}s" + (f" / budget {budget:.0f}s]" if budget else "]")
        line = f"criterion {number:>2}: {verdict} - {detail}{timing}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
        assert in_time, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
