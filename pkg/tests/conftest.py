import numpy as np
import pytest

import taskopt as to


def central_difference(fn, x, h=1e-7):
    """Central finite differences of a vector-valued function, step 1e-7."""
    x = np.asarray(x, dtype=float)
    f0 = np.ravel(fn(x))
    J = np.zeros((f0.size, x.size))
    for j in range(x.size):
        e = np.zeros(x.size)
        e[j] = h
        J[:, j] = (np.ravel(fn(x + e)) - np.ravel(fn(x - e))) / (2.0 * h)
    return J


def relative_error(approx, exact, floor=1e-8):
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    scale = np.maximum(np.abs(exact), floor)
    return float((np.abs(approx - exact) / scale).max(initial=0.0))


def fd_close(approx, exact, rel=1e-6, abs_=1e-8):
    """Derivative comparison at 1e-6 relative with 1e-8 absolute slack near zero."""
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    return bool(np.all(np.abs(approx - exact) <= rel * np.abs(exact) + abs_))


def planar_fk(q):
    """Closed-form planar-2R forward kinematics (unit links)."""
    q = np.asarray(q, dtype=float)
    return np.array(
        [np.cos(q[0]) + np.cos(q[0] + q[1]), np.sin(q[0]) + np.sin(q[0] + q[1]), 0.0]
    )


def planar_jacobian(q):
    """Closed-form planar-2R positional Jacobian rows (x, y)."""
    q = np.asarray(q, dtype=float)
    s1, s12 = np.sin(q[0]), np.sin(q[0] + q[1])
    c1, c12 = np.cos(q[0]), np.cos(q[0] + q[1])
    return np.array([[-s1 - s12, -s12], [c1 + c12, c12]])


@pytest.fixture(scope="session")
def planar2r():
    return to.RobotModel(to.fixture_path("planar2r"), tip="ee", name="arm")


@pytest.fixture(scope="session")
def arm6():
    return to.RobotModel(to.fixture_path("arm6"), tip="ee", name="arm6")
