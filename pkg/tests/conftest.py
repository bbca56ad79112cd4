import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record an acceptance criterion outcome, then assert it."""

    def check(key, description, ok, detail=""):
        _CRITERIA[key] = (description, bool(ok), detail)
        assert ok, f"criterion {key} failed: {description} ({detail})"

    return check


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA, key=lambda k: (int("".join(c for c in k if c.isdigit())), k)):
        description, ok, detail = _CRITERIA[key]
        line = f"[{'PASS' if ok else 'FAIL'}] {key}: {description}"
        terminalreporter.write_line(line + (f" -- {detail}" if detail else ""))
