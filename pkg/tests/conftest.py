"""Shared helpers: exact-arithmetic oracles and small matrix factories."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import settings

from matverify import DenseMatrix, paper2x2

U = 2.0**-53

# statistical properties are asserted at fixed confidence; a fixed example
# sequence keeps a rare tail event from turning into a flaky run
settings.register_profile("default", derandomize=True)
settings.load_profile("default")


def exact_dot(row, x) -> Fraction:
    return sum((Fraction(float(a)) * Fraction(float(b)) for a, b in zip(row, x)), Fraction(0))


def exact_matvec(a, x) -> np.ndarray:
    """``a @ x`` evaluated in rational arithmetic, then rounded once."""
    a = np.asarray(a.data if isinstance(a, DenseMatrix) else a)
    return np.array([float(exact_dot(row, x)) for row in a])


def exact_product(a, b) -> np.ndarray:
    a = np.asarray(a.data if isinstance(a, DenseMatrix) else a)
    b = np.asarray(b.data if isinstance(b, DenseMatrix) else b)
    return np.array([[float(exact_dot(a[i], b[:, j])) for j in range(b.shape[1])] for i in range(a.shape[0])])


def uniform(rng, rows, cols) -> DenseMatrix:
    return DenseMatrix(rng.uniform(-1.0, 1.0, size=(rows, cols)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def swap2x2():
    return paper2x2()


# one line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
