"""Forward maps: the exact linear map and its randomized approximation.

A randomized forward map is described by two pieces: a noise law
(``draw_noise``) and a deterministic evaluation ``evaluate(u, omega)``
given one noise realization. Samplers only rely on this pair, so they can
pre-draw noise in blocks, recycle it, or freeze it across a whole chain.
Both ``evaluate`` and ``__call__`` broadcast over leading axes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from .diagnostics import fit_rate
from .errors import DimensionMismatch, InsufficientData
from .gaussian import GaussianMeasure, psd_sqrt
from .rng import as_generator


class ForwardMap(Protocol):
    input_dim: int
    output_dim: int

    def __call__(self, u: np.ndarray) -> np.ndarray: ...


class RandomizedForwardMap(Protocol):
    input_dim: int
    output_dim: int
    noise_dim: int

    def draw_noise(self, rng, size=()) -> np.ndarray: ...

    def evaluate(self, u: np.ndarray, omega: np.ndarray) -> np.ndarray: ...


def _check_input(u, dim: int) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim == 0 or u.shape[-1] != dim:
        raise DimensionMismatch(f"expected input of dimension {dim}, got shape {u.shape}")
    return u


@dataclass(frozen=True, eq=False)
class LinearForwardMap:
    """``u -> A u``."""

    matrix_A: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.matrix_A, dtype=float))
        if A.ndim != 2 or not np.all(np.isfinite(A)):
            raise ValueError("matrix_A must be a finite 2-d array")
        A.setflags(write=False)
        object.__setattr__(self, "matrix_A", A)

    @property
    def input_dim(self) -> int:
        return self.matrix_A.shape[1]

    @property
    def output_dim(self) -> int:
        return self.matrix_A.shape[0]

    def __call__(self, u) -> np.ndarray:
        return _check_input(u, self.input_dim) @ self.matrix_A.T


@dataclass(frozen=True, eq=False)
class RandomizedLinearForwardMap:
    """``(omega, u) -> (A + h P) u + h xi(omega)`` with ``xi ~ N(0, Q)``.

    ``P`` defaults to the identity (square ``A`` only) and ``Q`` to the
    identity on the output space. ``Q`` may be singular; it is applied
    through a PSD square root so that ``Q = 0`` gives noiseless output.
    """

    matrix_A: np.ndarray
    h: float
    perturbation_P: Optional[np.ndarray] = None
    noise_Q: Optional[np.ndarray] = None
    _noise_root: np.ndarray = field(init=False, repr=False)
    _A_h: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.matrix_A, dtype=float))
        m, d = A.shape
        if self.perturbation_P is None:
            if m != d:
                raise DimensionMismatch("P defaults to the identity, which needs a square A")
            P = np.eye(d)
        else:
            P = np.atleast_2d(np.asarray(self.perturbation_P, dtype=float))
        Q = np.eye(m) if self.noise_Q is None else np.atleast_2d(np.asarray(self.noise_Q, dtype=float))
        if P.shape != A.shape:
            raise DimensionMismatch(f"P has shape {P.shape}, A has shape {A.shape}")
        if Q.shape != (m, m):
            raise DimensionMismatch(f"Q must be {m}x{m}, got {Q.shape}")
        if not self.h >= 0.0:
            raise ValueError(f"h must be non-negative, got {self.h}")
        for arr in (A, P, Q):
            arr.setflags(write=False)
        object.__setattr__(self, "matrix_A", A)
        object.__setattr__(self, "perturbation_P", P)
        object.__setattr__(self, "noise_Q", Q)
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "_noise_root", psd_sqrt(Q))
        A_h = A + self.h * P
        A_h.setflags(write=False)
        object.__setattr__(self, "_A_h", A_h)

    @property
    def input_dim(self) -> int:
        return self.matrix_A.shape[1]

    @property
    def output_dim(self) -> int:
        return self.matrix_A.shape[0]

    @property
    def noise_dim(self) -> int:
        return self.matrix_A.shape[0]

    @property
    def A_h(self) -> np.ndarray:
        return self._A_h

    @property
    def exact(self) -> LinearForwardMap:
        return LinearForwardMap(self.matrix_A)

    def draw_noise(self, rng, size=()) -> np.ndarray:
        """Draw ``xi ~ N(0, Q)`` with shape ``size + (m,)``."""
        size = (size,) if np.isscalar(size) else tuple(size)
        z = as_generator(rng).standard_normal(size + (self.noise_dim,))
        return z @ self._noise_root.T

    def evaluate(self, u, omega) -> np.ndarray:
        u = _check_input(u, self.input_dim)
        return u @ self._A_h.T + self.h * np.asarray(omega, dtype=float)

    def sample(self, u, rng) -> np.ndarray:
        """One fresh realization ``G_h(., u)``."""
        u = _check_input(u, self.input_dim)
        return self.evaluate(u, self.draw_noise(rng, u.shape[:-1]))

    def freeze(self, omega) -> Callable[[np.ndarray], np.ndarray]:
        """The deterministic map ``u -> G_h(omega, u)`` for a fixed noise draw."""
        omega = np.asarray(omega, dtype=float)
        return lambda u: self.evaluate(u, omega)

    def ms_error_sq(self, u) -> np.ndarray:
        """Exact ``E|G_h(u) - G(u)|^2 = h^2 (tr Q + |P u|^2)``."""
        u = _check_input(u, self.input_dim)
        pu = u @ self.perturbation_P.T
        return self.h**2 * (np.trace(self.noise_Q) + np.sum(pu * pu, axis=-1))


def apply_exact(fmap: LinearForwardMap, u) -> np.ndarray:
    return fmap(u)


def apply_randomized(fmap: RandomizedLinearForwardMap, u, rng) -> np.ndarray:
    return fmap.sample(u, rng)


@dataclass(frozen=True)
class MsOrderEstimate:
    h_values: list
    rms_errors: list
    fitted_slope: float


def estimate_ms_order(
    map_family: Callable[[float], RandomizedForwardMap],
    exact: ForwardMap,
    test_points: Optional[Sequence] = None,
    h_values: Sequence[float] = (0.5, 0.25, 0.125, 0.0625, 0.03125),
    samples_per_h: int = 2000,
    rng=0,
    prior: Optional[GaussianMeasure] = None,
    n_test_points: int = 10,
) -> MsOrderEstimate:
    """Empirical mean-square order of a randomized map family.

    For each ``h`` the root-mean-square error ``E|G(u) - G_h(u)|^2`` is
    estimated from ``samples_per_h`` draws at every test point and the
    maximum over test points is kept. The order is the least-squares slope
    of log(rms) against log(h). Test points default to ``n_test_points``
    draws from ``prior``.
    """
    gen = as_generator(rng)
    hs = sorted((float(h) for h in h_values), reverse=True)
    if len(hs) < 3 or len(set(hs)) != len(hs) or hs[-1] <= 0.0:
        raise InsufficientData("need at least 3 distinct positive h values")
    if test_points is None:
        if prior is None:
            raise InsufficientData("pass test_points or a prior to draw them from")
        test_points = prior.sample(gen, n_test_points)
    pts = np.atleast_2d(np.asarray(test_points, dtype=float))
    if pts.shape[0] < 1:
        raise InsufficientData("need at least one test point")
    g_exact = exact(pts)
    rms = []
    for h in hs:
        fmap = map_family(h)
        omega = fmap.draw_noise(gen, (samples_per_h, pts.shape[0]))
        err = fmap.evaluate(pts, omega) - g_exact
        rms.append(float(np.max(np.sqrt(np.mean(np.sum(err * err, axis=-1), axis=0)))))
    if min(rms) <= 0.0:
        raise InsufficientData("zero error at some h: the family reproduces the exact map, order undefined")
    slope = fit_rate(hs, rms).slope
    return MsOrderEstimate(h_values=hs, rms_errors=rms, fitted_slope=slope)
