"""Comparison tools: empirical moments, moment errors, Monte Carlo standard
errors, quadrature Hellinger distances and log-log rate fits."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    GridTooCoarse,
    InsufficientData,
    NonPositiveValue,
    UnsupportedDimension,
)

NORMALIZATION_TOL = 1e-3


@dataclass(frozen=True)
class MomentError:
    mean_error: float
    cov_error: float
    reference: str = ""


@dataclass(frozen=True)
class RateFit:
    abscissae: tuple
    ordinates: tuple
    slope: float
    intercept: float
    r_squared: float

    def predict(self, x):
        return np.exp(self.intercept) * np.asarray(x, dtype=float) ** self.slope


def fit_rate(x, y=None) -> RateFit:
    """Least-squares fit of ``log y = intercept + slope * log x``.

    Accepts either two sequences or a single sequence of ``(x, y)`` pairs.
    """
    if y is None:
        pairs = list(x)
        x = [p[0] for p in pairs]
        y = [p[1] for p in pairs]
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise DimensionMismatch("abscissae and ordinates must be 1-d of equal length")
    if xa.size < 3:
        raise InsufficientData(f"need at least 3 points for a rate fit, got {xa.size}")
    if not (np.all(xa > 0) and np.all(ya > 0)):
        raise NonPositiveValue("rate fits need strictly positive values")
    lx, ly = np.log(xa), np.log(ya)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (intercept + slope * lx)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    return RateFit(tuple(xa), tuple(ya), float(slope), float(intercept), float(min(r2, 1.0)))


def empirical_moments(states) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and unbiased (1/(n-1)) sample covariance of ``(n, d)`` states."""
    x = np.asarray(states, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise InsufficientData("need at least 2 states")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (x.shape[0] - 1)
    return mean, 0.5 * (cov + cov.T)


def moment_error(states, reference, reference_name: str = "") -> MomentError:
    """Euclidean mean error and Frobenius covariance error against ``reference``.

    ``reference`` is a :class:`~randpost.gaussian.GaussianMeasure` or a
    ``(mean, covariance)`` pair.
    """
    ref_mean, ref_cov = _unpack(reference)
    mean, cov = empirical_moments(states)
    if mean.shape != ref_mean.shape:
        raise DimensionMismatch(f"states of dimension {mean.shape[0]} vs reference {ref_mean.shape[0]}")
    return MomentError(
        mean_error=float(np.linalg.norm(mean - ref_mean)),
        cov_error=float(np.linalg.norm(cov - ref_cov)),
        reference=reference_name,
    )


def _unpack(reference):
    if hasattr(reference, "covariance"):
        return np.asarray(reference.mean), np.asarray(reference.covariance)
    mean, cov = reference
    return np.atleast_1d(np.asarray(mean, dtype=float)), np.atleast_2d(np.asarray(cov, dtype=float))


def integrated_autocorrelation(series, c: float = 5.0) -> float:
    """Integrated autocorrelation time with Sokal's self-consistent window.

    Returns 1.0 for a constant series.
    """
    x = np.asarray(series, dtype=float)
    n = x.size
    if n < 2:
        raise InsufficientData("need at least 2 samples")
    x = x - x.mean()
    var = float(np.dot(x, x))
    if var == 0.0:
        return 1.0
    size = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(x, size)
    acf = np.fft.irfft(f * np.conj(f), size)[:n] / var
    taus = 2.0 * np.cumsum(acf) - 1.0
    window = np.arange(n) >= c * taus
    m = int(np.argmax(window)) if window.any() else n - 1
    return float(max(taus[m], 1.0))


@dataclass(frozen=True)
class MomentStandardErrors:
    """Monte Carlo standard errors of chain moments, corrected for autocorrelation."""

    mean: np.ndarray
    covariance: np.ndarray

    @property
    def mean_norm(self) -> float:
        """Root-mean-square size of the Euclidean mean error."""
        return float(np.sqrt(np.sum(self.mean**2)))

    @property
    def cov_norm(self) -> float:
        """Root-mean-square size of the Frobenius covariance error."""
        return float(np.sqrt(np.sum(self.covariance**2)))


def moment_standard_errors(states) -> MomentStandardErrors:
    """Standard errors of the sample mean and covariance entries of a chain.

    Each entry uses ``sqrt(var * tau / n)`` with ``tau`` the integrated
    autocorrelation time of the relevant scalar series (coordinates for the
    mean, centered products for the covariance).
    """
    x = np.asarray(states, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, d = x.shape
    if n < 2:
        raise InsufficientData("need at least 2 states")
    centered = x - x.mean(axis=0)
    mean_se = np.empty(d)
    for i in range(d):
        s = centered[:, i]
        mean_se[i] = np.sqrt(s.var(ddof=1) * integrated_autocorrelation(s) / n)
    cov_se = np.empty((d, d))
    for i, j in itertools.combinations_with_replacement(range(d), 2):
        p = centered[:, i] * centered[:, j]
        cov_se[i, j] = cov_se[j, i] = np.sqrt(p.var(ddof=1) * integrated_autocorrelation(p) / n)
    return MomentStandardErrors(mean_se, cov_se)


@dataclass(frozen=True)
class TensorGrid:
    """Tensor grid ``x = center + transform @ z`` with ``z`` on ``axes``.

    Quadrature runs in the ``z`` coordinates with the trapezoidal rule;
    densities given in ``x`` are multiplied by ``|det transform|``. A
    whitening transform makes an axis-aligned grid follow a correlated
    Gaussian, which keeps the node count per axis modest.
    """

    axes: tuple
    center: Optional[np.ndarray] = None
    transform: Optional[np.ndarray] = None

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(len(a) for a in self.axes)

    @classmethod
    def uniform(cls, lows, highs, nodes) -> "TensorGrid":
        lows, highs = np.atleast_1d(lows), np.atleast_1d(highs)
        nodes = np.broadcast_to(nodes, lows.shape)
        return cls(tuple(np.linspace(lo, hi, int(n)) for lo, hi, n in zip(lows, highs, nodes)))

    @classmethod
    def around(cls, measure, half_width: float = 8.0, nodes: Optional[int] = None) -> "TensorGrid":
        """Whitened grid spanning ``half_width`` standard deviations of ``measure``."""
        d = measure.dim
        if nodes is None:
            nodes = 801 if d == 1 else 401
        z = np.linspace(-half_width, half_width, nodes)
        return cls(tuple(z for _ in range(d)), np.asarray(measure.mean), measure.factor.lower)

    def points(self) -> np.ndarray:
        """Grid nodes in ``x`` coordinates, shape ``(prod(shape), d)``."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        z = np.stack([m.ravel() for m in mesh], axis=-1)
        if self.transform is not None:
            z = z @ np.asarray(self.transform).T
        if self.center is not None:
            z = z + self.center
        return z

    def jacobian(self) -> float:
        if self.transform is None:
            return 1.0
        return float(abs(np.linalg.det(np.asarray(self.transform))))

    def integrate(self, values) -> float:
        """Trapezoidal integral of ``values`` given on ``points()`` (x-densities)."""
        v = np.asarray(values, dtype=float).reshape(self.shape) * self.jacobian()
        for ax in reversed(self.axes):
            v = np.trapezoid(v, ax, axis=-1)
        return float(v)


def hellinger_quadrature(
    density_a: Callable[[np.ndarray], np.ndarray],
    density_b: Callable[[np.ndarray], np.ndarray],
    grid: TensorGrid,
    normalization_tol: float = NORMALIZATION_TOL,
) -> float:
    """Hellinger distance ``sqrt(1/2 int (sqrt a - sqrt b)^2)`` on a tensor grid.

    Both densities must integrate to one on the grid within
    ``normalization_tol``, otherwise :class:`GridTooCoarse` is raised.
    """
    if grid.dim > 2:
        raise UnsupportedDimension(f"tensor-grid Hellinger supports d <= 2, got d = {grid.dim}")
    x = grid.points()
    a = np.asarray(density_a(x), dtype=float)
    b = np.asarray(density_b(x), dtype=float)
    if np.any(a < 0) or np.any(b < 0):
        raise NonPositiveValue("densities must be non-negative")
    for name, v in (("a", a), ("b", b)):
        mass = grid.integrate(v)
        if not abs(mass - 1.0) <= normalization_tol:
            raise GridTooCoarse(f"density {name} integrates to {mass:.6g} on the grid")
    h2 = 0.5 * grid.integrate((np.sqrt(a) - np.sqrt(b)) ** 2)
    return float(np.sqrt(np.clip(h2, 0.0, 1.0)))


def median_by(rows: Sequence, key: Callable, value: Callable) -> dict:
    """Median of ``value(row)`` grouped by ``key(row)``."""
    groups: dict = {}
    for r in rows:
        groups.setdefault(key(r), []).append(value(r))
    return {k: float(np.median(v)) for k, v in groups.items()}
