import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from randpost.diagnostics import (
    TensorGrid,
    empirical_moments,
    fit_rate,
    hellinger_quadrature,
    integrated_autocorrelation,
    median_by,
    moment_error,
    moment_standard_errors,
)
from randpost.errors import DimensionMismatch, GridTooCoarse, InsufficientData, NonPositiveValue, UnsupportedDimension
from randpost.gaussian import GaussianMeasure, hellinger_gaussian
from randpost.rng import SeededRng


def test_fit_rate_exact_power():
    x = [1.0, 2.0, 4.0, 8.0]
    fit = fit_rate(x, [v**2 for v in x])
    assert fit.slope == pytest.approx(2.0, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit_rate([(v, 5.0) for v in x]).slope == pytest.approx(0.0, abs=1e-12)


def test_fit_rate_noisy():
    rng = np.random.default_rng(0)
    x = np.logspace(-3, 0, 20)
    y = 3 * x**1.5 * (1 + 0.01 * rng.standard_normal(x.size))
    assert abs(fit_rate(x, y).slope - 1.5) <= 0.05


def test_fit_rate_errors():
    with pytest.raises(InsufficientData):
        fit_rate([1.0, 2.0], [1.0, 2.0])
    with pytest.raises(NonPositiveValue):
        fit_rate([1.0, 2.0, 3.0], [1.0, 0.0, 2.0])
    with pytest.raises(DimensionMismatch):
        fit_rate([1.0, 2.0, 3.0], [1.0, 2.0])


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(0.01, 100.0), min_size=3, max_size=8, unique=True),
    st.floats(0.01, 100.0),
    st.floats(-3.0, 3.0),
)
def test_fit_rate_scale_invariant(x, c, k):
    y = [v**k * (1.0 + 0.1 * np.sin(i)) for i, v in enumerate(x)]
    a = fit_rate(x, y).slope
    b = fit_rate(x, [c * v for v in y]).slope
    assert abs(a - b) <= 1e-9 * max(1.0, abs(a))


def test_empirical_moments_cases():
    mean, cov = empirical_moments(np.tile([1.0, 2.0], (5, 1)))
    np.testing.assert_array_equal(mean, [1.0, 2.0])
    np.testing.assert_array_equal(cov, np.zeros((2, 2)))
    v = np.array([0.5, -1.0])
    _, cov = empirical_moments(np.stack([v, -v]))
    np.testing.assert_allclose(cov, 2 * np.outer(v, v))
    with pytest.raises(InsufficientData):
        empirical_moments(np.zeros((1, 2)))


def test_empirical_moments_large_sample():
    g = GaussianMeasure([1.0, -2.0], [[2.0, 0.5], [0.5, 1.0]])
    mean, cov = empirical_moments(g.sample(SeededRng(0), 1_000_000))
    np.testing.assert_allclose(cov, g.covariance, rtol=0.01)
    assert np.linalg.norm(mean - g.mean) <= 0.01 * np.linalg.norm(g.mean)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 40), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_empirical_covariance_symmetric_psd(n, d, seed):
    x = np.random.default_rng(seed).standard_normal((n, d))
    _, cov = empirical_moments(x)
    np.testing.assert_array_equal(cov, cov.T)
    assert np.linalg.eigvalsh(cov).min() >= -1e-12


def test_moment_error_cases():
    g = GaussianMeasure([0.0, 1.0], [[1.0, 0.3], [0.3, 2.0]])
    x = g.sample(SeededRng(1), 1000)
    fit = empirical_moments(x)
    e = moment_error(x, fit)
    assert e.mean_error == pytest.approx(0.0, abs=1e-12)
    assert e.cov_error == pytest.approx(0.0, abs=1e-12)
    shift = np.array([3.0, 4.0])
    e = moment_error(x + shift, fit)
    assert e.mean_error == pytest.approx(5.0)
    assert e.cov_error == pytest.approx(0.0, abs=1e-10)
    with pytest.raises(DimensionMismatch):
        moment_error(x, (np.zeros(3), np.eye(3)))


def test_moment_error_exact_draws_within_clt():
    g = GaussianMeasure([0.0, 1.0], [[1.0, 0.3], [0.3, 2.0]])
    x = g.sample(SeededRng(2), 1_000_000)
    se = moment_standard_errors(x)
    e = moment_error(x, g)
    assert e.mean_error <= 3 * se.mean_norm
    assert e.cov_error <= 3 * se.cov_norm


def test_integrated_autocorrelation():
    rng = np.random.default_rng(0)
    assert integrated_autocorrelation(rng.standard_normal(100_000)) == pytest.approx(1.0, abs=0.05)
    # AR(1) with coefficient rho: tau = (1 + rho) / (1 - rho)
    rho, n = 0.9, 200_000
    e = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = e[0]
    for i in range(1, n):
        x[i] = rho * x[i - 1] + e[i]
    assert integrated_autocorrelation(x) == pytest.approx(19.0, rel=0.1)
    assert integrated_autocorrelation(np.ones(10)) == 1.0


def test_hellinger_quadrature_cases():
    a = GaussianMeasure([0.2], [[0.7]])
    b = GaussianMeasure([-0.4], [[1.3]])
    grid = TensorGrid.around(GaussianMeasure([0.0], [[1.3]]))
    assert grid.shape == (801,)
    assert hellinger_quadrature(a.density, a.density, grid) == pytest.approx(0.0, abs=1e-12)
    d_ab = hellinger_quadrature(a.density, b.density, grid)
    assert d_ab == pytest.approx(hellinger_gaussian(a, b), abs=1e-6)
    assert d_ab == pytest.approx(hellinger_quadrature(b.density, a.density, grid), abs=1e-15)
    assert 0.0 <= d_ab <= 1.0


def test_hellinger_shrinking_mixture():
    g = GaussianMeasure([0.0], [[1.0]])
    grid = TensorGrid.around(g)
    dists = []
    for delta in (0.5, 0.1, 0.01):
        mix = lambda x, s=delta: 0.5 * (g.density(x - s) + g.density(x + s))
        dists.append(hellinger_quadrature(g.density, mix, grid))
    assert dists[0] > dists[1] > dists[2] and dists[2] < 1e-4


def test_hellinger_grid_guards():
    g = GaussianMeasure([0.0], [[1.0]])
    narrow = TensorGrid.uniform([-1.0], [1.0], 101)
    with pytest.raises(GridTooCoarse):
        hellinger_quadrature(g.density, g.density, narrow)
    g3 = GaussianMeasure(np.zeros(3), np.eye(3))
    with pytest.raises(UnsupportedDimension):
        hellinger_quadrature(g3.density, g3.density, TensorGrid.around(g3, nodes=5))


def test_hellinger_2d_correlated():
    a = GaussianMeasure([0.0, 0.5], [[1.0, 0.6], [0.6, 0.8]])
    b = GaussianMeasure([0.2, 0.4], [[1.2, 0.5], [0.5, 0.9]])
    grid = TensorGrid.around(b)
    assert grid.shape == (401, 401)
    assert hellinger_quadrature(a.density, b.density, grid) == pytest.approx(hellinger_gaussian(a, b), abs=1e-6)


def test_median_by():
    rows = [("a", 1.0), ("a", 3.0), ("a", 2.0), ("b", 5.0)]
    assert median_by(rows, lambda r: r[0], lambda r: r[1]) == {"a": 2.0, "b": 5.0}
