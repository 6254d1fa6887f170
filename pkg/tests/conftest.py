from __future__ import annotations

import pytest

from pmsl.log import EventLog

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def tiny_log() -> EventLog:
    return EventLog([["A", "B"], ["A", "B"], ["A", "C"]], ["c1", "c2", "c3"])


@pytest.fixture
def record_criterion():
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def record(label: str, ok: bool, detail: str) -> None:
        ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
        print(ACCEPTANCE_LINES[-1])

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
