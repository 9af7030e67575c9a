import numpy as np
import pytest

from minimax_meta.geometry import FeasibleSet
from minimax_meta.tasks import NoiseModel, QuadraticTask, TaskSet, quadratic_suite, trig_suite


def central_diff(f, x, h=1e-5):
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def noisy():
    return NoiseModel(0.3, 0.5, 0.2)


@pytest.fixture
def quad4(noisy):
    return quadratic_suite(4, 3, FeasibleSet.ball(2.0, dim=3), seed=1, noise=noisy)


@pytest.fixture
def trig4(noisy):
    return trig_suite(4, 3, FeasibleSet.ball(2.0, dim=3), seed=2, noise=noisy)


@pytest.fixture
def mirrored():
    """Two 1-d quadratics mirrored about 0 on the ball of radius 2."""
    noise = NoiseModel(0.5, 0.5, 0.0)
    tasks = (QuadraticTask([[1.0]], [1.0], noise=noise), QuadraticTask([[1.0]], [-1.0], noise=noise))
    return TaskSet(tasks, FeasibleSet.ball(2.0, dim=1))


@pytest.fixture
def single_1d():
    """``f(w) = w^2`` on the line, zero noise."""
    return TaskSet((QuadraticTask([[2.0]], [0.0]),), FeasibleSet.everywhere(1))


# one line per acceptance criterion, repeated after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
