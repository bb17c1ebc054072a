from __future__ import annotations

import pytest

from qlcic.gf import PrimeField
from qlcic.probspace import Pmf

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def f3():
    return PrimeField(3)


@pytest.fixture(scope="session")
def ex2(f3):
    """Ternary parameter set for the ``2X1 + X2 + X3`` channel, used throughout the oracles."""
    P = lambda v: Pmf.from_literal(f3, v)
    return {
        "N1": P([0.75, 0.20, 0.05]),
        "N2": P([0.99, 0.01, 0.0]),
        "N3": P([0.99, 0.01, 0.0]),
        "V1": P([0.6, 0.4, 0.0]),
        "V2": P([0.6, 0.0, 0.4]),
    }


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
