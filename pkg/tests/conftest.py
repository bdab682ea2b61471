import pathlib

import pytest

ROOT = pathlib.Path(__file__).resolve().parents[1]

_ACCEPTANCE = []


@pytest.fixture
def configs_dir():
    return ROOT / "configs"


@pytest.fixture
def report():
    """Record one acceptance line; printed again in the terminal summary."""

    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)
