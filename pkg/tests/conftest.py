import numpy as np
import pytest

from nlslab.ground_state import RadialGrid, solve_ground_state


@pytest.fixture(scope="session")
def q1():
    return solve_ground_state(1, RadialGrid(1, 4096, 30.0))


@pytest.fixture(scope="session")
def q2():
    return solve_ground_state(2, RadialGrid(2, 4096, 30.0))


@pytest.fixture(scope="session")
def q3():
    return solve_ground_state(3, RadialGrid(3, 4096, 30.0))


def closed_form_q1(x):
    """The d = 1 quintic-NLS ground state 3^(1/4) sech^(1/2)(2x)."""
    return 3.0 ** 0.25 / np.cosh(2.0 * np.asarray(x)) ** 0.5
