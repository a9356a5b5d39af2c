import numpy as np
import pytest

from fpoutflow.covering import StateSpace

ACCEPTANCE_LINES = []


@pytest.fixture
def unit_interval():
    return StateSpace.box([[0.0, 1.0]])


@pytest.fixture
def square():
    return StateSpace.box([[-1.0, 1.0], [-1.0, 1.0]])


@pytest.fixture
def disk():
    return StateSpace.ball([0.0, 0.0], 1.0, bounds=[[-1.0, 1.0], [-1.0, 1.0]])


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def rk4_fixed(f, y0, t, steps):
    """Classical RK4 with a fixed step; independent reference integrator."""
    y = np.array(y0, dtype=float)
    h = t / steps
    for _ in range(steps):
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y
