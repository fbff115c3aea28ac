"""Potentials and Monte Carlo estimators of likelihoods and normalizing constants.

Likelihood values are carried as logarithms (``-Phi``) and only
exponentiated at the end, since small observation noise drives the
potential to values where ``exp(-Phi)`` underflows.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import roots_hermitenorm

from .errors import DimensionMismatch, InsufficientData, NonPositiveWeight, UnsupportedDimension
from .gaussian import GaussianMeasure, cholesky
from .rng import SeededRng, as_generator

logger = logging.getLogger(__name__)

PRIOR_MONTE_CARLO = "prior_monte_carlo"
TENSOR_QUADRATURE = "tensor_quadrature"
DEFAULT_QUADRATURE_NODES = {1: 201, 2: 64, 3: 24}
DEFAULT_MC_SAMPLES = 100_000


def log_mean_exp(x, axis=-1) -> np.ndarray:
    """``log(mean(exp(x)))`` along ``axis`` without overflow or underflow."""
    x = np.asarray(x, dtype=float)
    mx = np.max(x, axis=axis, keepdims=True)
    safe = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(divide="ignore"):  # all -inf gives -inf
        out = np.log(np.mean(np.exp(x - safe), axis=axis, keepdims=True)) + safe
    return np.squeeze(out, axis=axis)


@dataclass(frozen=True, eq=False)
class Observation:
    """Data ``y`` with Gaussian noise covariance ``gamma``.

    ``whitener`` is ``L^{-1}`` for ``gamma = L L^T``, so that
    ``whitener.T @ whitener`` is ``gamma^{-1}``.
    """

    y: np.ndarray
    gamma: np.ndarray
    whitener: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.y, dtype=float)).copy()
        gamma = np.atleast_2d(np.asarray(self.gamma, dtype=float)).copy()
        if gamma.shape != (y.size, y.size):
            raise DimensionMismatch(f"gamma must be {y.size}x{y.size}, got {gamma.shape}")
        W = cholesky(gamma).inverse_lower()
        for arr in (y, gamma, W):
            arr.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "whitener", W)

    @classmethod
    def isotropic(cls, y, sigma: float) -> "Observation":
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return cls(y, sigma**2 * np.eye(y.size))

    @property
    def dim(self) -> int:
        return self.y.size

    def potential(self, g) -> np.ndarray:
        """``1/2 |gamma^{-1/2} (y - g)|^2`` over the last axis of ``g``."""
        g = np.asarray(g, dtype=float)
        if g.shape[-1] != self.dim:
            raise DimensionMismatch(f"forward output of dimension {g.shape[-1]}, data of dimension {self.dim}")
        r = (self.y - g) @ self.whitener.T
        return 0.5 * np.sum(r * r, axis=-1)


def potential_exact(obs: Observation, g_of_u) -> float:
    return obs.potential(g_of_u)


@dataclass(frozen=True)
class LikelihoodBatch:
    """``M`` independent draws of ``exp(-Phi_h(u))``, stored as logarithms."""

    log_values: np.ndarray
    point_u: np.ndarray
    seeds_used: tuple = ()

    @property
    def values(self) -> np.ndarray:
        return np.exp(self.log_values)

    @property
    def M(self) -> int:
        return self.log_values.size

    @property
    def log_mean(self) -> float:
        return float(log_mean_exp(self.log_values))

    @property
    def mean(self) -> float:
        """The estimator ``exp^M(-Phi_h(u))``."""
        return float(np.exp(self.log_mean))


def mc_likelihood(obs: Observation, fmap, u, M: int, rng) -> LikelihoodBatch:
    """Monte Carlo estimate of ``E[exp(-Phi_h(u))]`` from ``M`` forward draws.

    With a :class:`SeededRng`, draw ``i`` uses its own sub-stream
    ``rng.derive(i)`` and the stream addresses are recorded.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    u = np.asarray(u, dtype=float)
    if isinstance(rng, SeededRng):
        streams = [rng.derive(i) for i in range(M)]
        omega = np.stack([fmap.draw_noise(s.generator) for s in streams])
        seeds = tuple(s.stream for s in streams)
    else:
        omega = fmap.draw_noise(as_generator(rng), (M,))
        seeds = ()
    log_values = -obs.potential(fmap.evaluate(u, omega))
    return LikelihoodBatch(log_values=log_values, point_u=u, seeds_used=seeds)


@dataclass(frozen=True)
class NormalizingEstimate:
    value: float
    method: str
    sample_count_or_nodes: int
    log_value: float
    std_error: Optional[float] = None


def quadrature_rule(prior: GaussianMeasure, nodes_per_dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Hermite nodes and log-weights integrating against ``prior``."""
    d = prior.dim
    z, w = roots_hermitenorm(nodes_per_dim)
    with np.errstate(divide="ignore"):  # outermost weights underflow to 0 at high node counts
        logw = np.log(w) - 0.5 * np.log(2.0 * np.pi)
    mesh = np.meshgrid(*([z] * d), indexing="ij")
    zz = np.stack([m.ravel() for m in mesh], axis=-1)
    lw = sum(np.meshgrid(*([logw] * d), indexing="ij")).ravel()
    return prior.mean + zz @ prior.factor.lower.T, lw


def normalizing_constant(
    obs: Observation,
    forward: Callable[[np.ndarray], np.ndarray],
    prior: GaussianMeasure,
    method: Optional[str] = None,
    resolution: Optional[int] = None,
    rng=None,
) -> NormalizingEstimate:
    """``Z = int exp(-Phi(u)) dmu_0(u)`` for a deterministic forward map.

    Pass an exact map or a frozen realization of a randomized one. The
    default is tensor Gauss-Hermite quadrature under the prior for d <= 3
    and prior Monte Carlo with 10^5 samples otherwise.
    """
    d = prior.dim
    if method is None:
        method = TENSOR_QUADRATURE if d <= 3 else PRIOR_MONTE_CARLO
    if method == TENSOR_QUADRATURE:
        if d > 3:
            raise UnsupportedDimension(f"tensor quadrature supports d <= 3, got d = {d}")
        n = resolution or DEFAULT_QUADRATURE_NODES[d]
        pts, logw = quadrature_rule(prior, n)
        log_z = float(log_mean_exp(logw - obs.potential(forward(pts))) + np.log(logw.size))
        return NormalizingEstimate(float(np.exp(log_z)), method, n, log_z)
    if method == PRIOR_MONTE_CARLO:
        if rng is None:
            raise ValueError("prior Monte Carlo needs an rng")
        n = resolution or DEFAULT_MC_SAMPLES
        pts = prior.sample(rng, n)
        log_l = -obs.potential(forward(pts))
        log_z = float(log_mean_exp(log_l))
        se = float(np.std(np.exp(log_l - log_z), ddof=1) / np.sqrt(n) * np.exp(log_z))
        return NormalizingEstimate(float(np.exp(log_z)), method, n, log_z, se)
    raise ValueError(f"unknown method {method!r}")


def weighted_mc_likelihood(batch, per_draw_Z: Sequence[float]) -> np.ndarray:
    """Likelihood estimator weighted by normalizing constants.

    Returns ``(1/M) sum_i exp(-Phi_h^(i)(u)) Z_h^M / Z_h^(i)`` with
    ``Z_h^M`` the mean of ``per_draw_Z``. ``batch`` is a
    :class:`LikelihoodBatch` or an array of log-likelihood draws whose last
    axis has length ``M`` (leading axes are broadcast, e.g. grid points).
    """
    log_values = batch.log_values if isinstance(batch, LikelihoodBatch) else np.asarray(batch, dtype=float)
    z = np.asarray(per_draw_Z, dtype=float)
    if z.ndim != 1 or z.size != log_values.shape[-1]:
        raise DimensionMismatch(f"{log_values.shape[-1]} likelihood draws but {z.size} normalizing constants")
    if not np.all(z > 0):
        raise NonPositiveWeight("normalizing constants must be positive")
    log_zm = np.log(np.mean(z))
    out = np.exp(log_mean_exp(log_values + log_zm - np.log(z)))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class VarianceRow:
    h: float
    M: int
    var_likelihood: float
    var_normalizer: float
    mean_likelihood: float


def estimator_variance_sweep(
    obs: Observation,
    map_family: Callable,
    u,
    h_values: Sequence[float],
    M: int,
    replicates: int,
    rng,
    prior: Optional[GaussianMeasure] = None,
    z_nodes: Optional[int] = None,
) -> list[VarianceRow]:
    """Replicate variances of ``exp^M(-Phi_h(u))`` and ``Z_h^M`` for each ``h``.

    The same underlying noise stream is reused for every ``h`` (common
    random numbers), so differences across ``h`` are not masked by
    independent sampling noise. ``Var[Z_h^M]`` needs ``prior`` and uses
    Gauss-Hermite quadrature for each draw; without a prior it is NaN.
    """
    if replicates < 100:
        raise InsufficientData(f"need at least 100 replicates, got {replicates}")
    base = rng if isinstance(rng, SeededRng) else SeededRng(int(rng))
    u = np.asarray(u, dtype=float)
    rows = []
    for h in h_values:
        fmap = map_family(h)
        omega = fmap.draw_noise(base.derive(0).generator, (replicates, M))
        est = log_mean_exp(-obs.potential(fmap.evaluate(u, omega)))
        shift = float(np.max(est))
        var_l = float(np.var(np.exp(est - shift), ddof=1) * np.exp(2.0 * shift))
        mean_l = float(np.mean(np.exp(est - shift)) * np.exp(shift))
        var_z = float("nan")
        if prior is not None:
            pts, logw = quadrature_rule(prior, z_nodes or DEFAULT_QUADRATURE_NODES.get(prior.dim, 8))
            zm = np.empty(replicates)
            for r in range(replicates):
                g = fmap.evaluate(pts[None, :, :], omega[r][:, None, :])
                log_zi = log_mean_exp(logw - obs.potential(g), axis=-1) + np.log(logw.size)
                zm[r] = np.mean(np.exp(log_zi))
            var_z = float(np.var(zm, ddof=1))
        rows.append(VarianceRow(float(h), int(M), var_l, var_z, mean_l))
        logger.debug("h=%g M=%d var_lik=%.3e var_Z=%.3e", h, M, var_l, var_z)
    return rows
