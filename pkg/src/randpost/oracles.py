"""One-dimensional consistency checks of the closed forms against brute-force numerics.

Each check returns a :class:`CheckResult`; ``tolerance_scale`` multiplies
every tolerance (``0`` forces failures, which is how the harness itself is
tested).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import roots_hermitenorm

from .analytic import (
    LinearGaussianProblem,
    RandomizedLinearGaussianProblem,
    _component_means,
    averaged_posterior,
    exact_posterior,
    log_evidence,
    marginal_posterior,
    mixture_density,
    mixture_moments,
)
from .diagnostics import TensorGrid, hellinger_quadrature
from .gaussian import GaussianMeasure, hellinger_gaussian, psd_sqrt
from .potential import normalizing_constant
from .rng import SeededRng


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.detail or f'{self.value:.3e}, tolerance {self.tolerance:.3e}'}"


def default_problem(h: float = 0.25, seed: int = 0) -> RandomizedLinearGaussianProblem:
    """``y = u + noise`` with unit noise and prior, ``G_h(u) = (1 + h) u + h xi``."""
    y = 1.0 + SeededRng(seed, 1).generator.standard_normal()
    base = LinearGaussianProblem([[1.0]], [[1.0]], [0.0], [[1.0]], [y])
    return RandomizedLinearGaussianProblem(base, [[1.0]], [[1.0]], h)


def marginal_by_quadrature(p: RandomizedLinearGaussianProblem, xi_nodes: int = 64, u_nodes: int = 801):
    """Marginal posterior density on a grid, integrating the likelihood over ``xi`` by Gauss-Hermite.

    Returns the grid and the normalized density values on it.
    """
    ref = marginal_posterior(p)
    grid = TensorGrid.around(ref, 8.0, u_nodes)
    u = grid.points()
    z, w = roots_hermitenorm(xi_nodes)
    w = w / np.sqrt(2.0 * np.pi)
    xi = z[:, None] @ psd_sqrt(p.Q).T
    g = p.forward_map.evaluate(u[:, None, :], xi[None, :, :])
    lik = np.exp(-p.observation.potential(g)) @ w
    unnorm = lik * p.prior.density(u)
    return grid, unnorm / grid.integrate(unnorm)


def check_marginal_quadrature(scale: float = 1.0) -> CheckResult:
    p = default_problem()
    grid, dens = marginal_by_quadrature(p)
    table = dens.copy()
    d = hellinger_quadrature(lambda x: table, marginal_posterior(p).density, grid)
    tol = 1e-4 * scale
    return CheckResult("marginal_closed_form_vs_quadrature", d <= tol, d, tol, f"Hellinger {d:.3e}, tolerance {tol:.1e}")


def check_averaged_monte_carlo(scale: float = 1.0, n_draws: int = 100_000, n_points: int = 50) -> CheckResult:
    """Averaged-posterior density against the sample mean of sample-posterior densities."""
    p = default_problem()
    avg = averaged_posterior(p)
    sd = float(np.sqrt(avg.covariance[0, 0]))
    u = avg.mean[0] + np.linspace(-3.0, 3.0, n_points) * sd
    xi = p.forward_map.draw_noise(SeededRng(0, 2).generator, (n_draws,))
    means, cov = _component_means(p, xi)
    c = cov[0, 0]
    dens = np.exp(-0.5 * (u[:, None] - means[None, :, 0]) ** 2 / c) / np.sqrt(2.0 * np.pi * c)
    mc = dens.mean(axis=1)
    se = dens.std(axis=1, ddof=1) / np.sqrt(n_draws)
    closed = avg.density(u[:, None])
    z = np.abs(mc - closed) / se
    tol = 3.0 * scale
    worst = float(z.max())
    return CheckResult(
        "averaged_closed_form_vs_monte_carlo", bool(np.all(z <= tol)), worst, tol,
        f"max |error| / CLT sd = {worst:.2f} over {n_points} points, tolerance {tol:g}",
    )


def check_evidence(scale: float = 1.0) -> CheckResult:
    p = default_problem().base
    est = normalizing_constant(p.observation, lambda u: u @ p.A.T, p.prior)
    rel = abs(est.value / np.exp(log_evidence(p)) - 1.0)
    tol = 1e-10 * scale
    return CheckResult("evidence_quadrature_vs_closed_form", rel <= tol, rel, tol, f"relative error {rel:.2e}, tolerance {tol:.0e}")


def check_exact_posterior(scale: float = 1.0) -> CheckResult:
    p = default_problem().base
    post = exact_posterior(p)
    grid = TensorGrid.around(p.prior, 10.0, 2001)
    u = grid.points()
    unnorm = np.exp(-p.observation.potential(u @ p.A.T)) * p.prior.density(u)
    dens = unnorm / grid.integrate(unnorm)
    mean = grid.integrate(dens * u[:, 0])
    var = grid.integrate(dens * (u[:, 0] - mean) ** 2)
    err = max(abs(mean - post.mean[0]), abs(var - post.covariance[0, 0]))
    tol = 1e-8 * scale
    return CheckResult("exact_posterior_moments_vs_quadrature", err <= tol, err, tol, f"moment error {err:.2e}, tolerance {tol:.0e}")


def check_mixture_moments(scale: float = 1.0) -> CheckResult:
    p = default_problem()
    xi = p.forward_map.draw_noise(SeededRng(0, 3).generator, (7,))
    mean, cov = mixture_moments(p, xi)
    grid = TensorGrid.around(GaussianMeasure(mean, cov), 10.0, 4001)
    u = grid.points()
    dens = mixture_density(p, xi, u)
    qm = grid.integrate(dens * u[:, 0])
    qv = grid.integrate(dens * (u[:, 0] - qm) ** 2)
    err = max(abs(qm - mean[0]), abs(qv - cov[0, 0]))
    tol = 1e-8 * scale
    return CheckResult("mixture_moments_vs_quadrature", err <= tol, err, tol, f"moment error {err:.2e}, tolerance {tol:.0e}")


def check_hellinger(scale: float = 1.0) -> CheckResult:
    a = GaussianMeasure([0.3], [[0.5]])
    b = GaussianMeasure([-0.2], [[0.8]])
    grid = TensorGrid.around(GaussianMeasure([0.0], [[0.8]]), 12.0, 4001)
    err = abs(hellinger_gaussian(a, b) - hellinger_quadrature(a.density, b.density, grid))
    tol = 1e-9 * scale
    return CheckResult("hellinger_closed_form_vs_quadrature", err <= tol, err, tol, f"difference {err:.2e}, tolerance {tol:.0e}")


CHECKS: dict[str, Callable[[float], CheckResult]] = {
    "marginal_closed_form_vs_quadrature": check_marginal_quadrature,
    "averaged_closed_form_vs_monte_carlo": check_averaged_monte_carlo,
    "evidence_quadrature_vs_closed_form": check_evidence,
    "exact_posterior_moments_vs_quadrature": check_exact_posterior,
    "mixture_moments_vs_quadrature": check_mixture_moments,
    "hellinger_closed_form_vs_quadrature": check_hellinger,
}


def run_checks(scale: float = 1.0) -> list[CheckResult]:
    return [check(scale) for check in CHECKS.values()]
