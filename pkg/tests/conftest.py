import numpy as np
import pytest

from bosparse import MeasureSpace, build_tree_basis, dyadic_basis

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture(scope="session")
def dyadic3():
    return dyadic_basis(3)


@pytest.fixture(scope="session")
def two_atoms():
    return build_tree_basis(MeasureSpace([0.5, 0.5]), [[0, 1], [0], [1]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
