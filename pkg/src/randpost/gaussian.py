"""Dense Gaussian measures: factorization, sampling, densities, Hellinger distance."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import DimensionMismatch, NotPositiveDefinite, NotSymmetric
from .rng import as_generator

SYMMETRY_ATOL = 1e-12
LOG_2PI = np.log(2.0 * np.pi)


class SymmetrizationWarning(UserWarning):
    """A covariance was symmetrized on construction."""


def _square(matrix, name="matrix") -> np.ndarray:
    a = np.atleast_2d(np.asarray(matrix, dtype=float))
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise DimensionMismatch(f"{name} must be a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NotPositiveDefinite(f"{name} has non-finite entries")
    return a


def _asymmetry(a: np.ndarray) -> float:
    return float(np.max(np.abs(a - a.T)))


@dataclass(frozen=True, eq=False)
class CholeskyFactor:
    """Lower-triangular ``L`` with ``L @ L.T`` equal to the source matrix."""

    lower: np.ndarray
    source_dim: int

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve ``(L L^T) x = b``."""
        return cho_solve((self.lower, True), b)

    def whiten(self, b: np.ndarray) -> np.ndarray:
        """Apply ``L^{-1}`` along the last axis of ``b``."""
        b = np.asarray(b, dtype=float)
        flat = b.reshape(-1, self.source_dim).T
        return solve_triangular(self.lower, flat, lower=True).T.reshape(b.shape)

    def inverse_lower(self) -> np.ndarray:
        return solve_triangular(self.lower, np.eye(self.source_dim), lower=True)

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.lower))))

    def reconstruct(self) -> np.ndarray:
        return self.lower @ self.lower.T


def cholesky(matrix) -> CholeskyFactor:
    """Cholesky factor of a symmetric positive definite matrix.

    Raises
    ------
    NotSymmetric
        If entries differ from their transpose by more than
        ``1e-12 * max(1, max|matrix|)``.
    NotPositiveDefinite
        If the factorization breaks down.
    """
    a = _square(matrix)
    scale = max(1.0, float(np.max(np.abs(a))))
    if _asymmetry(a) > SYMMETRY_ATOL * scale:
        raise NotSymmetric(f"matrix is not symmetric (max asymmetry {_asymmetry(a):.3e})")
    a = 0.5 * (a + a.T)
    try:
        lower = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    if not np.all(np.diag(lower) > 0.0):
        raise NotPositiveDefinite("non-positive pivot in Cholesky factor")
    return CholeskyFactor(lower=lower, source_dim=a.shape[0])


def psd_sqrt(matrix, jitter: float = 1e-14) -> np.ndarray:
    """A square root ``R`` with ``R R^T = matrix`` for symmetric PSD input.

    Uses the Cholesky factor when it exists and a clipped eigendecomposition
    otherwise, so that an exactly singular (e.g. zero) matrix yields an
    exactly singular root.
    """
    a = _square(matrix)
    a = 0.5 * (a + a.T)
    try:
        cholesky(a + jitter * np.eye(a.shape[0]))
    except NotPositiveDefinite:
        raise NotPositiveDefinite("matrix is not positive semi-definite") from None
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(a)
        return v * np.sqrt(np.clip(w, 0.0, None))


@dataclass(frozen=True, eq=False)
class GaussianMeasure:
    """``N(mean, covariance)`` on R^d with a cached Cholesky factor.

    Slightly asymmetric covariances (roundoff from covariance arithmetic)
    are replaced by ``(C + C^T) / 2`` and a :class:`SymmetrizationWarning`
    is emitted when the asymmetry exceeds ``1e-12``.
    """

    mean: np.ndarray
    covariance: np.ndarray
    factor: CholeskyFactor = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float)).copy()
        cov = _square(self.covariance, "covariance").copy()
        if mean.ndim != 1 or mean.shape[0] != cov.shape[0]:
            raise DimensionMismatch(f"mean shape {mean.shape} vs covariance shape {cov.shape}")
        asym = _asymmetry(cov)
        if asym > SYMMETRY_ATOL:
            warnings.warn(f"symmetrizing covariance (max asymmetry {asym:.3e})", SymmetrizationWarning, stacklevel=3)
        if asym > 0.0:
            cov = 0.5 * (cov + cov.T)
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "factor", cholesky(cov))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def sample(self, rng, size=None) -> np.ndarray:
        """Draw ``mean + L z``; ``size`` prepends sample axes."""
        return sample(self, rng, size)

    def log_density(self, x) -> np.ndarray:
        return log_density(self, x)

    def density(self, x) -> np.ndarray:
        return np.exp(log_density(self, x))

    def mahalanobis_sq(self, x) -> np.ndarray:
        z = self.factor.whiten(np.asarray(x, dtype=float) - self.mean)
        return np.sum(z * z, axis=-1)


def sample(measure: GaussianMeasure, rng, size=None) -> np.ndarray:
    gen = as_generator(rng)
    shape = () if size is None else ((size,) if np.isscalar(size) else tuple(size))
    z = gen.standard_normal(shape + (measure.dim,))
    return measure.mean + z @ measure.factor.lower.T


def log_density(measure: GaussianMeasure, x) -> np.ndarray:
    """Log-density at ``x`` of shape ``(..., d)``; scalars allowed when d = 1."""
    x = np.asarray(x, dtype=float)
    if measure.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != measure.dim:
        raise DimensionMismatch(f"point of dimension {x.shape[-1]} for a {measure.dim}-d measure")
    quad = measure.mahalanobis_sq(x)
    return -0.5 * quad - 0.5 * (measure.dim * LOG_2PI + measure.factor.logdet())


def hellinger_gaussian(a: GaussianMeasure, b: GaussianMeasure) -> float:
    """Closed-form Hellinger distance between two Gaussians, in [0, 1].

    Uses ``d_H^2 = 1 - BC`` with the Bhattacharyya coefficient evaluated in
    log-space, and ``-expm1`` to keep precision for nearby measures.
    """
    if a.dim != b.dim:
        raise DimensionMismatch(f"dimensions {a.dim} and {b.dim} differ")
    avg = GaussianMeasure(0.5 * (a.mean + b.mean), 0.5 * (a.covariance + b.covariance))
    diff = a.mean - b.mean
    log_bc = (
        0.25 * a.factor.logdet()
        + 0.25 * b.factor.logdet()
        - 0.5 * avg.factor.logdet()
        - 0.125 * float(avg.mahalanobis_sq(avg.mean + diff))
    )
    h2 = -np.expm1(min(log_bc, 0.0))
    return float(np.sqrt(np.clip(h2, 0.0, 1.0)))
