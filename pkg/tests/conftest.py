"""Collects acceptance verdicts and prints them after the test summary."""

import pytest

_VERDICTS = []


@pytest.fixture(scope="session")
def verdicts():
    return _VERDICTS


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for key, passed, detail in sorted(_VERDICTS, key=lambda v: v[0]):
        terminalreporter.write_line(f"{key} {'PASS' if passed else 'FAIL'}  {detail}")
