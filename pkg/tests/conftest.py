import os
import sys

from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("default")

import time

import pytest

ACCEPTANCE_LINES = []


class Criterion:
    """Collects named checks for one acceptance criterion and times it."""

    def __init__(self, number, limit_s):
        self.number = number
        self.limit_s = limit_s
        self.checks = []
        self.start = time.perf_counter()

    def check(self, name, ok, detail):
        self.checks.append((name, bool(ok), detail))

    def finish(self):
        elapsed = time.perf_counter() - self.start
        self.check("runtime", elapsed < self.limit_s, f"{elapsed:.2f} s < {self.limit_s:g} s")
        failed = [c for c in self.checks if not c[1]]
        status = "FAIL" if failed else "PASS"
        parts = "; ".join(f"{n}: {d}{'' if ok else ' [FAIL]'}" for n, ok, d in self.checks)
        line = f"criterion {self.number}: {status} ({parts})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert not failed, "failed checks: " + ", ".join(c[0] for c in failed)


@pytest.fixture
def criterion():
    def make(number, limit_s):
        return Criterion(number, limit_s)
    return make


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
