from __future__ import annotations

import pytest

from starlie.lie import load_bundled
from starlie.starprod import StarContext
from starlie.weights import load_default_table

# (criterion number, passed, detail) rows filled in by test_acceptance.py
ACCEPTANCE: list[tuple[int, bool, str]] = []


def record(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE.append((number, passed, detail))
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def sl2():
    return load_bundled("sl2")


@pytest.fixture(scope="session")
def heis3():
    return load_bundled("heis3")


@pytest.fixture(scope="session")
def abelian3():
    return load_bundled("abelian3")


@pytest.fixture(scope="session")
def solv2():
    return load_bundled("solv2")


@pytest.fixture(scope="session")
def table():
    return load_default_table()


@pytest.fixture(scope="session")
def ctx(sl2, table):
    return StarContext(sl2, table, 2)
