"""Closed-form posteriors for the linear-Gaussian model with a randomized map.

The model is ``y = A u + beta``, ``beta ~ N(0, Gamma)``, prior ``N(m0, C0)``,
and the approximate map ``G_h(u) = (A + h P) u + h xi`` with ``xi ~ N(0, Q)``.
Every posterior below is Gaussian except the finite mixture built from
``M`` frozen noise draws.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DimensionMismatch, IllConditioned
from .forward import RandomizedLinearForwardMap
from .gaussian import LOG_2PI, GaussianMeasure, cholesky
from .potential import Observation, log_mean_exp

logger = logging.getLogger(__name__)

MAX_CONDITION = 1e12


@dataclass(frozen=True, eq=False)
class LinearGaussianProblem:
    A: np.ndarray
    gamma: np.ndarray
    m0: np.ndarray
    C0: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        m, d = A.shape
        gamma = np.atleast_2d(np.asarray(self.gamma, dtype=float))
        m0 = np.atleast_1d(np.asarray(self.m0, dtype=float))
        C0 = np.atleast_2d(np.asarray(self.C0, dtype=float))
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if gamma.shape != (m, m) or C0.shape != (d, d) or m0.shape != (d,) or y.shape != (m,):
            raise DimensionMismatch(
                f"inconsistent shapes: A {A.shape}, gamma {gamma.shape}, m0 {m0.shape}, C0 {C0.shape}, y {y.shape}"
            )
        cholesky(gamma)
        cholesky(C0)
        for name, arr in (("A", A), ("gamma", gamma), ("m0", m0), ("C0", C0), ("y", y)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def prior(self) -> GaussianMeasure:
        return GaussianMeasure(self.m0, self.C0)

    @property
    def observation(self) -> Observation:
        return Observation(self.y, self.gamma)

    @property
    def dims(self) -> tuple[int, int]:
        """``(d, m)``: parameter and data dimensions."""
        return self.A.shape[1], self.A.shape[0]


@dataclass(frozen=True, eq=False)
class RandomizedLinearGaussianProblem:
    base: LinearGaussianProblem
    P: np.ndarray
    Q: np.ndarray
    h: float

    def __post_init__(self):
        fmap = RandomizedLinearForwardMap(self.base.A, self.h, self.P, self.Q)
        object.__setattr__(self, "P", fmap.perturbation_P)
        object.__setattr__(self, "Q", fmap.noise_Q)
        object.__setattr__(self, "h", fmap.h)
        object.__setattr__(self, "_map", fmap)

    @property
    def forward_map(self) -> RandomizedLinearForwardMap:
        return self._map

    @property
    def A_h(self) -> np.ndarray:
        return self._map.A_h

    @property
    def gamma_h(self) -> np.ndarray:
        return self.base.gamma + self.h**2 * self.Q

    @property
    def prior(self) -> GaussianMeasure:
        return self.base.prior

    @property
    def observation(self) -> Observation:
        return self.base.observation

    def with_h(self, h: float) -> "RandomizedLinearGaussianProblem":
        return RandomizedLinearGaussianProblem(self.base, self.P, self.Q, h)


def _conjugate_batch(A, gamma, Y, m0, C0) -> tuple[np.ndarray, np.ndarray]:
    """Conjugate update for several data vectors (rows of ``Y``) sharing one precision.

    ``C^{-1} = A^T Gamma^{-1} A + C0^{-1}`` and ``m = C (A^T Gamma^{-1} y + C0^{-1} m0)``.
    Returns the means ``(K, d)`` and the common covariance.
    """
    lg = cholesky(gamma)
    l0 = cholesky(C0)
    gi_a = lg.solve(A)
    precision = A.T @ gi_a + l0.solve(np.eye(C0.shape[0]))
    precision = 0.5 * (precision + precision.T)
    cond = np.linalg.cond(precision)
    logger.debug("posterior precision condition number %.3e", cond)
    if not cond <= MAX_CONDITION:
        raise IllConditioned(f"posterior precision has condition number {cond:.3e} > {MAX_CONDITION:.0e}")
    lp = cholesky(precision)
    rhs = gi_a.T @ np.atleast_2d(Y).T + l0.solve(m0)[:, None]
    cov = lp.solve(np.eye(precision.shape[0]))
    return lp.solve(rhs).T, 0.5 * (cov + cov.T)


def _conjugate(A, gamma, y, m0, C0) -> GaussianMeasure:
    means, cov = _conjugate_batch(A, gamma, y[None, :], m0, C0)
    return GaussianMeasure(means[0], cov)


def exact_posterior(p: LinearGaussianProblem) -> GaussianMeasure:
    return _conjugate(p.A, p.gamma, p.y, p.m0, p.C0)


def sample_posterior(p: RandomizedLinearGaussianProblem, xi) -> GaussianMeasure:
    """Posterior for one frozen realization ``G_h(u) = A_h u + h xi``."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.shape != p.base.y.shape:
        raise DimensionMismatch(f"xi must have shape {p.base.y.shape}, got {xi.shape}")
    b = p.base
    return _conjugate(p.A_h, b.gamma, b.y - p.h * xi, b.m0, b.C0)


def noise_inflated_problem(p: RandomizedLinearGaussianProblem) -> LinearGaussianProblem:
    """``y = A_h u + beta_h`` with ``beta_h ~ N(0, Gamma + h^2 Q)``."""
    b = p.base
    return LinearGaussianProblem(p.A_h, p.gamma_h, b.m0, b.C0, b.y)


def marginal_posterior(p: RandomizedLinearGaussianProblem) -> GaussianMeasure:
    """The posterior built from the noise-averaged likelihood ``E[exp(-Phi_h)]``.

    Averaging the likelihood over ``xi`` only inflates the noise covariance,
    so this is the exact posterior of :func:`noise_inflated_problem`.
    """
    return exact_posterior(noise_inflated_problem(p))


def gaussian_random_average(
    F0, F1, C, xi_law: Union[GaussianMeasure, tuple]
) -> GaussianMeasure:
    """Average of the random measures ``N(F0 xi + F1, C)`` over ``xi``.

    ``xi_law`` is a :class:`GaussianMeasure` or a ``(mean, covariance)``
    pair; the pair form admits a singular covariance.
    """
    F0 = np.atleast_2d(np.asarray(F0, dtype=float))
    F1 = np.atleast_1d(np.asarray(F1, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if isinstance(xi_law, GaussianMeasure):
        m_xi, c_xi = xi_law.mean, xi_law.covariance
    else:
        m_xi = np.atleast_1d(np.asarray(xi_law[0], dtype=float))
        c_xi = np.atleast_2d(np.asarray(xi_law[1], dtype=float))
    d, m = F0.shape
    if F1.shape != (d,) or C.shape != (d, d) or m_xi.shape != (m,) or c_xi.shape != (m, m):
        raise DimensionMismatch(
            f"F0 {F0.shape}, F1 {F1.shape}, C {C.shape}, xi mean {m_xi.shape}, xi cov {c_xi.shape}"
        )
    spread = F0 @ c_xi @ F0.T
    return GaussianMeasure(F0 @ m_xi + F1, C + 0.5 * (spread + spread.T))


def averaged_posterior(p: RandomizedLinearGaussianProblem) -> GaussianMeasure:
    """Expectation over ``xi`` of the sample posteriors.

    Sample posterior means are affine in ``xi``:
    ``m_s(xi) = F1 + F0 xi`` with ``F0 = -h C_s A_h^T Gamma^{-1}``.
    """
    b = p.base
    centre = sample_posterior(p, np.zeros_like(b.y))
    F0 = -p.h * centre.covariance @ p.A_h.T @ cholesky(b.gamma).solve(np.eye(b.y.size))
    return gaussian_random_average(F0, centre.mean, centre.covariance, (np.zeros_like(b.y), p.Q))


def _component_means(p: RandomizedLinearGaussianProblem, xi_draws) -> tuple[np.ndarray, np.ndarray]:
    xi = np.asarray(xi_draws, dtype=float)
    if p.base.y.size == 1 and xi.ndim <= 1:
        xi = xi.reshape(-1, 1)
    xi = np.atleast_2d(xi)
    if xi.shape[-1] != p.base.y.size:
        raise DimensionMismatch(f"xi draws must have {p.base.y.size} columns, got {xi.shape}")
    b = p.base
    return _conjugate_batch(p.A_h, b.gamma, b.y - p.h * xi, b.m0, b.C0)


def mixture_moments(p: RandomizedLinearGaussianProblem, xi_draws) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of the equal-weight mixture of sample posteriors.

    All components share the covariance ``C_s``; the mixture covariance adds
    the (1/M-normalized) spread of the component means.
    """
    means, cov = _component_means(p, xi_draws)
    mean = means.mean(axis=0)
    dev = means - mean
    spread = dev.T @ dev / means.shape[0]
    return mean, cov + 0.5 * (spread + spread.T)


def mixture_log_density(p: RandomizedLinearGaussianProblem, xi_draws, u) -> np.ndarray:
    means, cov = _component_means(p, xi_draws)
    u = np.asarray(u, dtype=float)
    d = means.shape[1]
    if d == 1 and (u.ndim == 0 or u.shape[-1] != 1):
        u = u[..., None]
    if u.shape[-1] != d:
        raise DimensionMismatch(f"points of dimension {u.shape[-1]} for a {d}-d mixture")
    fac = cholesky(cov)
    diff = u[..., None, :] - means
    z = fac.whiten(diff)
    log_comp = -0.5 * np.sum(z * z, axis=-1) - 0.5 * (d * LOG_2PI + fac.logdet())
    return log_mean_exp(log_comp, axis=-1)


def mixture_density(p: RandomizedLinearGaussianProblem, xi_draws, u) -> np.ndarray:
    """Density of ``(1/M) sum_i N(m_s(xi_i), C_s)`` at ``u``."""
    return np.exp(mixture_log_density(p, xi_draws, u))


def log_evidence(p: LinearGaussianProblem) -> float:
    """``log int exp(-Phi(u)) dmu_0(u)`` with the unnormalized Gaussian likelihood."""
    marginal_cov = p.A @ p.C0 @ p.A.T + p.gamma
    y_law = GaussianMeasure(p.A @ p.m0, 0.5 * (marginal_cov + marginal_cov.T))
    m = p.y.size
    return float(y_law.log_density(p.y) + 0.5 * (m * LOG_2PI + cholesky(p.gamma).logdet()))


def marginal_log_likelihood(p: RandomizedLinearGaussianProblem, u) -> np.ndarray:
    """``log E[exp(-Phi_h(u))]`` over ``xi ~ N(0, Q)``, in closed form.

    ``y - A_h u - h xi`` is Gaussian with covariance ``Gamma_h``, hence
    ``E[exp(-Phi_h)] = sqrt(det Gamma / det Gamma_h) exp(-1/2 |y - A_h u|^2_{Gamma_h})``.
    """
    return marginal_log_likelihood_fn(p)(u)


def marginal_log_likelihood_fn(p: RandomizedLinearGaussianProblem):
    """:func:`marginal_log_likelihood` with the factorizations done once."""
    b = p.base
    lh = cholesky(p.gamma_h)
    W = lh.inverse_lower()
    A_h = p.A_h
    const = 0.5 * (cholesky(b.gamma).logdet() - lh.logdet())

    def log_lik(u):
        r = (b.y - np.asarray(u, dtype=float) @ A_h.T) @ W.T
        return -0.5 * np.sum(r * r, axis=-1) + const

    return log_lik


def draw_xi(p: RandomizedLinearGaussianProblem, rng, M: int) -> np.ndarray:
    return p.forward_map.draw_noise(rng, (M,))


__all__ = [
    "LinearGaussianProblem",
    "RandomizedLinearGaussianProblem",
    "averaged_posterior",
    "draw_xi",
    "exact_posterior",
    "gaussian_random_average",
    "log_evidence",
    "marginal_log_likelihood",
    "marginal_log_likelihood_fn",
    "marginal_posterior",
    "mixture_density",
    "mixture_log_density",
    "mixture_moments",
    "noise_inflated_problem",
    "sample_posterior",
]
