import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

CRITERIA: dict[str, tuple[bool, str]] = {}


class Criterion:
    """Records one acceptance criterion's outcome, pass or fail, for the summary."""

    def __init__(self, name):
        self.name = name
        self.detail = ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        ok = exc_type is None
        detail = self.detail if ok else f"{self.detail} {exc_type.__name__}: {exc}".strip()
        CRITERIA[self.name] = (ok, detail)
        print(f"{'PASS' if ok else 'FAIL'} {self.name}: {detail}")
        return False


@pytest.fixture
def criterion():
    return Criterion


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in CRITERIA.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
