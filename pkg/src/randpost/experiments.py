"""Convergence experiments on random linear test problems.

Two studies are provided:

* the marginal study runs RWMH (on the closed-form marginal posterior),
  PMMH and MCwM on a 3-d problem while sweeping ``M``, ``sigma`` or ``h``;
* the averaged study compares the ``M``-sample mixture of sample
  posteriors with the averaged posterior on a 2-d problem while sweeping
  ``h``, and optionally samples the mixture with MwMC.

A third, one-dimensional check measures Hellinger distances between the
closed-form posteriors and their Monte Carlo approximations by quadrature.

Random numbers are addressed by purpose: the test problem, each
replicate's chain seed and each replicate's forward-map noise come from
separate streams of the run seed. None of them depend on the sweep value,
so neighbouring sweep points share their randomness and rate fits are not
swamped by independent sampling noise.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .analytic import (
    LinearGaussianProblem,
    RandomizedLinearGaussianProblem,
    averaged_posterior,
    marginal_log_likelihood_fn,
    marginal_posterior,
    mixture_density,
    mixture_moments,
    sample_posterior,
)
from .diagnostics import RateFit, TensorGrid, fit_rate, hellinger_quadrature, moment_error
from .errors import ConfigError
from .potential import normalizing_constant
from .rng import SeededRng
from .samplers import ChainConfig, mcwm_many, mwmc, pmmh_many, rwmh_many

logger = logging.getLogger(__name__)

PROBLEM_STREAM, CHAIN_STREAM, XI_STREAM = 1, 2, 3

CI_STEPS = 100_000
PAPER_STEPS = 1_000_000
MODE_STEPS = {"ci": CI_STEPS, "paper": PAPER_STEPS}
DEFAULT_REPLICATES = 8

DEFAULT_M_VALUES = (1, 2, 4, 8, 16, 32, 64, 128, 256)
DEFAULT_SIGMA_VALUES = tuple(float(s) for s in np.logspace(-2.0, 0.0, 9))
DEFAULT_H_VALUES = tuple(2.0**-k for k in range(1, 9))

RWMH_REFERENCE, PMMH, MCWM, MWMC, MIXTURE = "RWMH_reference", "PMMH", "MCwM", "MwMC", "mixture"
MARGINAL_METHODS = (RWMH_REFERENCE, PMMH, MCWM)
SWEEP_VARIABLES = ("M", "sigma", "h")


@dataclass(frozen=True)
class SweepResult:
    method: str
    sweep_variable: str
    sweep_value: float
    replicate: int
    acceptance_ratio: float
    mean_error: float
    cov_error: float
    forward_evals: int
    wall_time_seconds: float = 0.0


def _positive(name, value):
    if not value > 0:
        raise ConfigError(f"{name} must be positive, got {value}")


@dataclass(frozen=True)
class MarginalExperimentConfig:
    """Parameters of the marginal study; the swept parameter overrides its fixed value."""

    d: int = 3
    m: int = 3
    h: float = 0.25
    sigma: float = 0.1
    M: int = 16
    N: int = CI_STEPS
    u_dagger: tuple = (1.0, 2.0, 3.0)
    seed: int = 0
    sweep_variable: str = "M"
    sweep_values: tuple = DEFAULT_M_VALUES
    replicates: int = DEFAULT_REPLICATES
    methods: tuple = MARGINAL_METHODS
    burn_in: int = 0

    def __post_init__(self):
        if self.sweep_variable not in SWEEP_VARIABLES:
            raise ConfigError(f"sweep_variable must be one of {SWEEP_VARIABLES}, got {self.sweep_variable!r}")
        if len(self.u_dagger) != self.d:
            raise ConfigError(f"u_dagger has length {len(self.u_dagger)}, expected d = {self.d}")
        if len(self.sweep_values) == 0:
            raise ConfigError("sweep_values is empty")
        for v in self.sweep_values:
            _positive("sweep values", v)
        if self.sweep_variable == "M" and any(int(v) != v for v in self.sweep_values):
            raise ConfigError("M sweep values must be integers")
        for name in ("d", "m", "h", "sigma", "M", "N", "replicates"):
            _positive(name, getattr(self, name))
        unknown = set(self.methods) - set(MARGINAL_METHODS)
        if unknown:
            raise ConfigError(f"unknown methods {sorted(unknown)}")

    def at(self, value) -> "MarginalExperimentConfig":
        """Copy with the swept parameter set to ``value``."""
        value = int(value) if self.sweep_variable == "M" else float(value)
        return replace(self, **{self.sweep_variable: value})


@dataclass(frozen=True)
class AveragedExperimentConfig:
    d: int = 2
    m: int = 2
    M: int = 16
    h_values: tuple = DEFAULT_H_VALUES
    u_dagger: tuple = (1.0, 2.0)
    gamma_scale: float = 1e-4
    seed: int = 0
    replicates: int = DEFAULT_REPLICATES
    run_mwmc: bool = False
    N: int = CI_STEPS
    contour_M: int = 10
    contour_h_values: tuple = (0.1, 0.01, 0.001)
    contour_nodes: int = 201
    grid_half_width: float = 8.0

    def __post_init__(self):
        if len(self.u_dagger) != self.d:
            raise ConfigError(f"u_dagger has length {len(self.u_dagger)}, expected d = {self.d}")
        if len(self.h_values) == 0:
            raise ConfigError("h_values is empty")
        for name in ("d", "m", "M", "gamma_scale", "replicates", "N", "contour_M", "contour_nodes"):
            _positive(name, getattr(self, name))
        for h in tuple(self.h_values) + tuple(self.contour_h_values):
            _positive("h values", h)


@dataclass(frozen=True)
class TheoremCheckConfig:
    """One-dimensional problem ``y = a u + noise`` with ``G_h(u) = (a + h p) u + h xi``."""

    a: float = 1.0
    sigma: float = 1.0
    u_dagger: float = 1.0
    prior_mean: float = 0.0
    prior_var: float = 1.0
    p: float = 1.0
    q: float = 1.0
    seed: int = 0
    replicates: int = 32
    h_values: tuple = tuple(2.0**-k for k in range(1, 7))
    M_values: tuple = DEFAULT_M_VALUES
    fixed_M: int = 16
    fixed_h: float = 0.25
    nodes: int = 801
    half_width: float = 8.0
    include_marginal: bool = True

    def __post_init__(self):
        for name in ("sigma", "prior_var", "replicates", "fixed_M", "nodes"):
            _positive(name, getattr(self, name))
        if self.q < 0 or self.fixed_h < 0 or any(h < 0 for h in self.h_values):
            raise ConfigError("h values and q must be non-negative")
        if any(int(M) != M or M < 1 for M in self.M_values):
            raise ConfigError("M values must be positive integers")


# -- problems ---------------------------------------------------------------


def draw_linear_system(rng, m: int, d: int, u_dagger, noise_scale: float):
    """``A ~ U(-1, 1)^{m x d}`` and ``y = A u_dagger + noise_scale * z``.

    ``z`` is drawn regardless of ``noise_scale`` so the same stream gives
    nested data across a noise sweep; ``noise_scale = 0`` returns ``A u`` exactly.
    """
    gen = rng.generator if isinstance(rng, SeededRng) else rng
    A = gen.uniform(-1.0, 1.0, size=(m, d))
    z = gen.standard_normal(m)
    y = A @ np.asarray(u_dagger, dtype=float)
    if noise_scale != 0.0:
        y = y + noise_scale * z
    return A, y


def generate_problem(config, rng=None) -> RandomizedLinearGaussianProblem:
    """Random test problem for a marginal or averaged config.

    ``P = I``, ``Q = I``, prior ``N(0, I)`` and isotropic noise with
    variance ``sigma^2`` (marginal) or ``gamma_scale`` (averaged). ``rng``
    defaults to the problem stream of ``config.seed``.
    """
    if rng is None:
        rng = SeededRng(config.seed, PROBLEM_STREAM)
    if isinstance(config, AveragedExperimentConfig):
        noise_var, h = config.gamma_scale, config.h_values[0]
    else:
        noise_var, h = config.sigma**2, config.h
    A, y = draw_linear_system(rng, config.m, config.d, config.u_dagger, float(np.sqrt(noise_var)))
    base = LinearGaussianProblem(A, noise_var * np.eye(config.m), np.zeros(config.d), np.eye(config.d), y)
    return RandomizedLinearGaussianProblem(base, np.eye(config.m, config.d), np.eye(config.m), h)


def chain_seed(seed: int, replicate: int) -> int:
    return SeededRng(seed, CHAIN_STREAM).child_seed(replicate)


def xi_stream(seed: int, replicate: int) -> SeededRng:
    return SeededRng(seed, (XI_STREAM, replicate))


# -- marginal study ---------------------------------------------------------


def _marginal_job(config: MarginalExperimentConfig, value, method: str) -> list[SweepResult]:
    cfg = config.at(value)
    p = generate_problem(cfg)
    target = marginal_posterior(p)
    chain_cfg = ChainConfig(
        n_steps=cfg.N, proposal_covariance=target.covariance, seed=cfg.seed, inner_M=cfg.M, burn_in=cfg.burn_in
    )
    seeds = [chain_seed(cfg.seed, r) for r in range(cfg.replicates)]
    t0 = time.perf_counter()
    if method == RWMH_REFERENCE:
        chains = rwmh_many(marginal_log_likelihood_fn(p), p.prior, chain_cfg, seeds)
    elif method == PMMH:
        chains = pmmh_many(p.observation, p.forward_map, p.prior, chain_cfg, seeds)
    else:
        chains = mcwm_many(p.observation, p.forward_map, p.prior, chain_cfg, seeds)
    wall = (time.perf_counter() - t0) / len(chains)
    rows = []
    for r, chain in enumerate(chains):
        err = moment_error(chain.states, target)
        rows.append(
            SweepResult(method, cfg.sweep_variable, float(value), r, chain.acceptance_ratio,
                        err.mean_error, err.cov_error, chain.forward_evals, wall)
        )
    logger.info("%s %s=%g: median acceptance %.3f", method, cfg.sweep_variable, value,
                np.median([x.acceptance_ratio for x in rows]))
    return rows


def _run_jobs(fn, jobs, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *job) for job in jobs]
        return [f.result() for f in futures]


def run_marginal_experiment(config: MarginalExperimentConfig, workers: int = 1) -> list[SweepResult]:
    """RWMH (closed-form marginal likelihood), PMMH and MCwM over the sweep.

    Every chain uses the marginal posterior covariance as proposal
    covariance and is scored against the closed-form marginal posterior
    with the Euclidean mean error and the Frobenius covariance error.
    Replicate ``r`` uses the same chain seed for all methods and sweep
    values. Rows are ordered by method, sweep value and replicate.
    """
    jobs = [(config, v, meth) for meth in config.methods for v in config.sweep_values]
    rows = [row for batch in _run_jobs(_marginal_job, jobs, workers) for row in batch]
    order = {m: i for i, m in enumerate(MARGINAL_METHODS)}
    return sorted(rows, key=lambda r: (order[r.method], r.sweep_value, r.replicate))


# -- averaged study ---------------------------------------------------------


@dataclass(frozen=True)
class ContourGrid:
    h: float
    M: int
    points: np.ndarray
    density_mixture: np.ndarray
    density_closed_form: np.ndarray
    grid: TensorGrid = field(repr=False)

    @property
    def masses(self) -> tuple[float, float]:
        return self.grid.integrate(self.density_mixture), self.grid.integrate(self.density_closed_form)


@dataclass(frozen=True)
class AveragedResults:
    rows: list
    contours: list
    hellinger_comparison: list = field(default_factory=list)


def contour_grid(p: RandomizedLinearGaussianProblem, xi, nodes: int, half_width: float = 8.0) -> ContourGrid:
    """Mixture and averaged-posterior densities on a grid aligned with the averaged posterior."""
    avg = averaged_posterior(p)
    grid = TensorGrid.around(avg, half_width, nodes)
    pts = grid.points()
    return ContourGrid(p.h, len(xi), pts, mixture_density(p, xi, pts), avg.density(pts), grid)


def mixture_hellinger(p: RandomizedLinearGaussianProblem, xi, nodes: Optional[int] = None, half_width: float = 8.0) -> float:
    """Quadrature Hellinger distance between the averaged posterior and the mixture."""
    avg = averaged_posterior(p)
    grid = TensorGrid.around(avg, half_width, nodes)
    return hellinger_quadrature(lambda x: mixture_density(p, xi, x), avg.density, grid)


def _averaged_job(config: AveragedExperimentConfig, h: float) -> list[SweepResult]:
    p = generate_problem(config).with_h(h)
    target = averaged_posterior(p)
    rows = []
    for r in range(config.replicates):
        xi = p.forward_map.draw_noise(xi_stream(config.seed, r).generator, (config.M,))
        mean, cov = mixture_moments(p, xi)
        rows.append(SweepResult(
            MIXTURE, "h", float(h), r, float("nan"),
            float(np.linalg.norm(mean - target.mean)), float(np.linalg.norm(cov - target.covariance)), 0, 0.0,
        ))
        if config.run_mwmc:
            t0 = time.perf_counter()
            # proposal scaled to one sample posterior, which every sub-chain targets
            prop = sample_posterior(p, xi[0]).covariance
            cfg = ChainConfig(n_steps=config.N, proposal_covariance=prop, seed=chain_seed(config.seed, r))
            run = mwmc(p.observation, p.forward_map, p.prior, cfg, xi=xi)
            err = moment_error(run.pooled_states, (mean, cov))
            rows.append(SweepResult(
                MWMC, "h", float(h), r, run.acceptance_ratio, err.mean_error, err.cov_error,
                run.forward_evals, time.perf_counter() - t0,
            ))
    return rows


def run_averaged_experiment(config: AveragedExperimentConfig, workers: int = 1) -> AveragedResults:
    """Mixture moments against the averaged posterior over ``h``, plus contour data.

    For replicate ``r`` the ``M`` noise draws come from the same stream at
    every ``h``. Contour grids use ``contour_M`` draws of replicate 0; the
    Hellinger comparison is computed for every replicate at the smallest
    and largest contour ``h``.
    """
    jobs = [(config, h) for h in config.h_values]
    rows = [row for batch in _run_jobs(_averaged_job, jobs, workers) for row in batch]
    rows.sort(key=lambda r: (r.method != MIXTURE, r.sweep_value, r.replicate))
    base = generate_problem(config)
    contours = []
    for h in config.contour_h_values:
        p = base.with_h(h)
        xi = p.forward_map.draw_noise(xi_stream(config.seed, 0).generator, (config.contour_M,))
        contours.append(contour_grid(p, xi, config.contour_nodes, config.grid_half_width))
    comparison = []
    if len(config.contour_h_values) >= 2:
        h_hi, h_lo = max(config.contour_h_values), min(config.contour_h_values)
        for r in range(config.replicates):
            dist = {}
            for h in (h_hi, h_lo):
                p = base.with_h(h)
                xi = p.forward_map.draw_noise(xi_stream(config.seed, r).generator, (config.contour_M,))
                dist[h] = mixture_hellinger(p, xi, half_width=config.grid_half_width)
            comparison.append((r, dist[h_hi], dist[h_lo]))
    return AveragedResults(rows, contours, comparison)


# -- rate summaries ---------------------------------------------------------


def median_errors(rows: Sequence[SweepResult], method: str) -> tuple[list, list, list, list]:
    """Sweep values and the median acceptance, mean error and covariance error per value."""
    values = sorted({r.sweep_value for r in rows if r.method == method})
    acc, me, ce = [], [], []
    for v in values:
        sel = [r for r in rows if r.method == method and r.sweep_value == v]
        acc.append(float(np.median([r.acceptance_ratio for r in sel])))
        me.append(float(np.median([r.mean_error for r in sel])))
        ce.append(float(np.median([r.cov_error for r in sel])))
    return values, acc, me, ce


def rate_summary(rows: Sequence[SweepResult]) -> dict:
    """Log-log slopes of median mean and covariance errors per method.

    Keys are ``<method>_mean_slope`` and ``<method>_cov_slope`` with the
    method lower-cased; a slope is ``None`` when fewer than three sweep
    values are available.
    """
    out = {}
    for method in dict.fromkeys(r.method for r in rows):
        values, _, me, ce = median_errors(rows, method)
        key = method.split("_")[0].lower()
        for kind, errs in (("mean", me), ("cov", ce)):
            try:
                out[f"{key}_{kind}_slope"] = fit_rate(values, errs).slope
            except (ValueError, ArithmeticError) as exc:
                logger.warning("no %s %s-error rate: %s", method, kind, exc)
                out[f"{key}_{kind}_slope"] = None
    return out


# -- Hellinger scaling check ------------------------------------------------


@dataclass(frozen=True)
class HellingerRow:
    kind: str  # "averaged" or "marginal"
    h: float
    M: int
    rms_hellinger: float
    replicates: int


@dataclass(frozen=True)
class TheoremCheckResult:
    rows: list
    slope_vs_h: Optional[RateFit] = None
    slope_vs_M: Optional[RateFit] = None
    marginal_slope_vs_h: Optional[RateFit] = None
    marginal_slope_vs_M: Optional[RateFit] = None


def theorem_check_problem(config: TheoremCheckConfig, h: float) -> RandomizedLinearGaussianProblem:
    gen = SeededRng(config.seed, PROBLEM_STREAM).generator
    y = config.a * config.u_dagger + config.sigma * gen.standard_normal()
    base = LinearGaussianProblem([[config.a]], [[config.sigma**2]], [config.prior_mean], [[config.prior_var]], [y])
    return RandomizedLinearGaussianProblem(base, [[config.p]], [[config.q]], h)


def marginal_mc_hellinger(p: RandomizedLinearGaussianProblem, xi, grid: TensorGrid) -> float:
    """Hellinger distance between the marginal posterior and its ``M``-draw Monte Carlo version.

    The Monte Carlo density is ``exp^M(-Phi_h(u)) / Z_h^M`` against the
    prior, with each draw's ``Z`` computed by Gauss-Hermite quadrature.
    """
    obs, prior, fmap = p.observation, p.prior, p.forward_map
    xi = np.asarray(xi, dtype=float)
    z = np.array([normalizing_constant(obs, fmap.freeze(w), prior).value for w in xi])
    logger.debug("h=%g M=%d: per-draw Z in [%.3e, %.3e]", p.h, len(xi), z.min(), z.max())

    def mc_density(x):
        log_l = -obs.potential(fmap.evaluate(x[:, None, :], xi[None, :, :]))
        return np.mean(np.exp(log_l), axis=1) / np.mean(z) * prior.density(x)

    return hellinger_quadrature(mc_density, marginal_posterior(p).density, grid)


def run_theorem_check(config: TheoremCheckConfig, sweep: Optional[str] = None) -> TheoremCheckResult:
    """Root-mean-square Hellinger errors of the Monte Carlo posteriors.

    ``sweep="h"`` varies ``h`` at ``fixed_M``, ``sweep="M"`` varies ``M`` at
    ``fixed_h`` and ``None`` does both. Replicate ``r`` draws its noise from
    one stream; smaller ``M`` use a prefix of it and every ``h`` reuses it.
    At ``h = 0`` the map is deterministic, the approximations coincide
    with the exact posterior and the distance is reported as 0.
    """
    cases = []
    if sweep in (None, "h"):
        cases += [(h, int(config.fixed_M)) for h in config.h_values]
    if sweep in (None, "M"):
        cases += [(float(config.fixed_h), int(M)) for M in config.M_values]
    cases = list(dict.fromkeys(cases))
    max_M = max(M for _, M in cases)
    kinds = ("averaged", "marginal") if config.include_marginal else ("averaged",)
    noise = [
        theorem_check_problem(config, 1.0).forward_map.draw_noise(xi_stream(config.seed, r).generator, (max_M,))
        for r in range(config.replicates)
    ]
    rows = []
    for h, M in cases:
        p = theorem_check_problem(config, h)
        for kind in kinds:
            if h == 0.0:
                rows.append(HellingerRow(kind, h, M, 0.0, config.replicates))
                continue
            ref = averaged_posterior(p) if kind == "averaged" else marginal_posterior(p)
            grid = TensorGrid.around(ref, config.half_width, config.nodes)
            sq = []
            for r in range(config.replicates):
                xi = noise[r][:M]
                if kind == "averaged":
                    d = hellinger_quadrature(lambda x: mixture_density(p, xi, x), ref.density, grid)
                else:
                    d = marginal_mc_hellinger(p, xi, grid)
                sq.append(d * d)
            rows.append(HellingerRow(kind, h, M, float(np.sqrt(np.mean(sq))), config.replicates))

    def fit(kind, by):
        if by == "h":
            sel = [(r.h, r.rms_hellinger) for r in rows if r.kind == kind and r.M == config.fixed_M and r.h > 0]
        else:
            sel = [(r.M, r.rms_hellinger) for r in rows if r.kind == kind and r.h == config.fixed_h]
        if len(sel) < 3:
            return None
        return fit_rate(sel)

    return TheoremCheckResult(
        rows=rows,
        slope_vs_h=fit("averaged", "h") if sweep in (None, "h") else None,
        slope_vs_M=fit("averaged", "M") if sweep in (None, "M") else None,
        marginal_slope_vs_h=fit("marginal", "h") if config.include_marginal and sweep in (None, "h") else None,
        marginal_slope_vs_M=fit("marginal", "M") if config.include_marginal and sweep in (None, "M") else None,
    )
