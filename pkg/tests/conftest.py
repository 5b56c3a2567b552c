"""Shared reporting for the acceptance tests.

Each acceptance test funnels its verdict through the `criterion` fixture,
which prints one pass/fail line immediately and repeats all of them in a
summary block after the run, where capture cannot hide them.
"""

import pytest


class CriterionLog:
    def __init__(self):
        self.lines = []

    def check(self, name: str, passed: bool, detail: str) -> None:
        line = f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}"
        self.lines.append(line)
        print(line)
        assert passed, line

    def skip(self, name: str, reason: str) -> None:
        line = f"[SKIP] {name}: {reason}"
        self.lines.append(line)
        print(line)
        pytest.skip(reason)


_log = CriterionLog()


@pytest.fixture(scope="session")
def criterion() -> CriterionLog:
    return _log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _log.lines:
        terminalreporter.section("acceptance criteria")
        for line in _log.lines:
            terminalreporter.write_line(line)
