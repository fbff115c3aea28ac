import numpy as np
import pytest

from randpost.analytic import LinearGaussianProblem, RandomizedLinearGaussianProblem


@pytest.fixture
def scalar_problem():
    """d = m = 1: A = 1, P = 1, Q = 1, h = 0.5, unit noise and prior, y = 1."""
    base = LinearGaussianProblem([[1.0]], [[1.0]], [0.0], [[1.0]], [1.0])
    return RandomizedLinearGaussianProblem(base, [[1.0]], [[1.0]], 0.5)


@pytest.fixture
def random_problem():
    """A random 3-d problem with correlated prior and noise."""
    rng = np.random.default_rng(11)
    A = rng.uniform(-1, 1, (3, 3))
    B = rng.standard_normal((3, 3))
    C0 = B @ B.T + np.eye(3)
    G = rng.standard_normal((3, 3))
    gamma = 0.1 * (G @ G.T) + 0.05 * np.eye(3)
    base = LinearGaussianProblem(A, gamma, rng.standard_normal(3), C0, rng.standard_normal(3))
    P = rng.standard_normal((3, 3))
    Q = np.diag([1.0, 0.5, 2.0])
    return RandomizedLinearGaussianProblem(base, P, Q, 0.3)


def spd(rng, d):
    M = rng.standard_normal((d, d))
    return M.T @ M + np.eye(d)
