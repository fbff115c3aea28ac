"""Random-walk Metropolis samplers for exact and randomized likelihoods.

All four samplers share one Gaussian random-walk proposal and one
accept/reject kernel and differ only in how the log-likelihood of the
current and proposed states is obtained:

* ``rwmh``: a deterministic, user-supplied log-likelihood.
* ``pmmh``: a fresh ``M``-draw estimate at the proposal; the estimate at the
  current state is kept from the step at which that state was accepted.
* ``mcwm``: fresh ``M``-draw estimates at both states on every step.
* ``mwmc``: ``M`` independent RWMH chains, one per frozen realization of
  the randomized map, pooled at the end.

Several chains can be advanced in lockstep (the ``*_many`` variants). Each
chain owns separate random streams for its initial state, proposals,
acceptance uniforms and estimator noise, so its output does not depend on
which other chains share the batch, and switching the likelihood estimator
leaves the proposal and acceptance sequences untouched.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, EstimatorUnderflow
from .forward import RandomizedLinearForwardMap
from .gaussian import GaussianMeasure, cholesky
from .potential import Observation, log_mean_exp
from .rng import SeededRng

logger = logging.getLogger(__name__)

# stream ids below a chain's root stream
INIT_STREAM, PROPOSAL_STREAM, ACCEPT_STREAM, ESTIMATOR_STREAM = 0, 1, 2, 3
# stream ids below the run's root for MwMC
FROZEN_MAP_STREAM, SUBCHAIN_STREAM = 4, 5

_BLOCK_FLOATS = 1 << 18


@dataclass(frozen=True, eq=False)
class ChainConfig:
    """Run parameters shared by all samplers.

    Parameters
    ----------
    n_steps : int
        Number of recorded states ``N``.
    proposal_covariance : array_like
        SPD covariance of the random-walk increment.
    seed : int
        Unsigned 64-bit seed.
    initial_state : array_like, optional
        Starting point; drawn from the prior when omitted.
    inner_M : int
        Monte Carlo draws per likelihood estimate (ignored by RWMH).
    burn_in : int
        Extra steps run before recording starts.
    """

    n_steps: int
    proposal_covariance: np.ndarray
    seed: int = 0
    initial_state: Optional[np.ndarray] = None
    inner_M: int = 1
    burn_in: int = 0

    def __post_init__(self):
        if int(self.n_steps) < 1:
            raise ValueError(f"n_steps must be at least 1, got {self.n_steps}")
        if int(self.inner_M) < 1:
            raise ValueError(f"inner_M must be at least 1, got {self.inner_M}")
        if int(self.burn_in) < 0:
            raise ValueError("burn_in must be non-negative")
        cov = np.atleast_2d(np.asarray(self.proposal_covariance, dtype=float))
        cholesky(cov)
        object.__setattr__(self, "proposal_covariance", cov)
        if self.initial_state is not None:
            u0 = np.atleast_1d(np.asarray(self.initial_state, dtype=float))
            if u0.shape != (cov.shape[0],):
                raise DimensionMismatch(f"initial state of shape {u0.shape} for a {cov.shape[0]}-d proposal")
            object.__setattr__(self, "initial_state", u0)

    @property
    def dim(self) -> int:
        return self.proposal_covariance.shape[0]


@dataclass(frozen=True, eq=False)
class Chain:
    """Recorded output of one Markov chain.

    ``log_estimates[i]`` is the log-likelihood value attached to
    ``states[i]`` when the step finished: the exact value for RWMH, the
    recycled estimate for PMMH and the fresh proposal-or-current estimate
    for MCwM. ``forward_evals`` counts forward-map (or target) evaluations
    made by the steps; the ``initial_evals`` spent on the starting point are
    reported separately.
    """

    states: np.ndarray
    accepted: np.ndarray
    seed: int
    log_estimates: np.ndarray
    forward_evals: int
    initial_evals: int = 0
    underflow_events: int = 0
    method: str = ""

    @property
    def n_steps(self) -> int:
        return self.accepted.shape[0]

    @property
    def acceptance_ratio(self) -> float:
        return acceptance_ratio(self)


@dataclass(frozen=True, eq=False)
class MwmcSample:
    """Sub-chains of a Metropolis-within-Monte-Carlo run and their frozen noise."""

    sub_chains: tuple
    xi_draws: np.ndarray

    @property
    def M(self) -> int:
        return len(self.sub_chains)

    @property
    def pooled_states(self) -> np.ndarray:
        return np.concatenate([c.states for c in self.sub_chains], axis=0)

    @property
    def acceptance_ratio(self) -> float:
        return float(np.mean([c.acceptance_ratio for c in self.sub_chains]))

    @property
    def forward_evals(self) -> int:
        return sum(c.forward_evals for c in self.sub_chains)


def acceptance_ratio(chain) -> float:
    """Fraction of accepted proposals."""
    acc = np.asarray(chain.accepted if hasattr(chain, "accepted") else chain, dtype=bool)
    if acc.size == 0:
        raise ValueError("empty chain")
    return float(np.mean(acc))


def _roots(config: ChainConfig, seeds) -> list[SeededRng]:
    if seeds is None:
        seeds = [config.seed]
    return [s if isinstance(s, SeededRng) else SeededRng(int(s)) for s in seeds]


def _initial_states(prior: GaussianMeasure, config: ChainConfig, roots) -> np.ndarray:
    if config.initial_state is not None:
        return np.tile(config.initial_state, (len(roots), 1))
    return np.stack([prior.sample(r.derive(INIT_STREAM).generator) for r in roots])


def _metropolis(
    prior: GaussianMeasure,
    config: ChainConfig,
    roots: Sequence[SeededRng],
    u0: np.ndarray,
    log_lik: Callable,
    draw_noise: Optional[Callable] = None,
    noise_dim: int = 1,
    refresh_current: bool = False,
    method: str = "",
) -> list[Chain]:
    """Lockstep Metropolis kernel for ``K = len(roots)`` chains.

    ``log_lik(u)`` maps ``(K, d)`` states to ``(K,)`` values, or
    ``log_lik(u, omega)`` with per-chain noise ``omega`` of shape
    ``(K, M, k)`` when ``draw_noise`` is given. ``draw_noise(gen, size)``
    returns noise of shape ``size + (k,)``. With ``refresh_current`` the
    current state is re-estimated on every step.
    """
    K, d = u0.shape
    if prior.dim != d or config.dim != d:
        raise DimensionMismatch(f"prior of dimension {prior.dim}, proposal of dimension {config.dim}, states of dimension {d}")
    stochastic = draw_noise is not None
    M = int(config.inner_M)
    R = 2 if refresh_current else 1
    total = config.burn_in + config.n_steps

    L_q = cholesky(config.proposal_covariance).lower
    W0 = prior.factor.inverse_lower()
    m0 = prior.mean

    def half_prior_quad(u):
        z = (u - m0) @ W0.T
        return 0.5 * np.sum(z * z, axis=-1)

    prop_gens = [r.derive(PROPOSAL_STREAM).generator for r in roots]
    acc_gens = [r.derive(ACCEPT_STREAM).generator for r in roots]
    est_gens = [r.derive(ESTIMATOR_STREAM).generator for r in roots] if stochastic else []

    u = np.array(u0, dtype=float)
    qu = half_prior_quad(u)
    if stochastic:
        omega0 = np.stack([draw_noise(g, (M,)) for g in est_gens])
        cur = np.asarray(log_lik(u, omega0), dtype=float).reshape(K)
        init_evals = M
    else:
        cur = np.asarray(log_lik(u), dtype=float).reshape(K)
        init_evals = 1

    states = np.empty((K, config.n_steps, d))
    accepted = np.zeros((K, config.n_steps), dtype=bool)
    log_est = np.empty((K, config.n_steps))
    underflow = np.zeros(K, dtype=np.int64)

    # the block length only trades memory for call overhead; results do not depend on it
    per_step = R * M * noise_dim
    block = int(np.clip(_BLOCK_FLOATS // max(per_step, 1), 16, 4096))

    with np.errstate(invalid="ignore", over="ignore"):
        for start in range(0, total, block):
            b = min(block, total - start)
            steps = np.stack([g.standard_normal((b, d)) for g in prop_gens]) @ L_q.T
            log_u = np.log(np.stack([g.random(b) for g in acc_gens]))
            if stochastic:
                noise = np.stack([draw_noise(g, (b, R, M)) for g in est_gens])
            for j in range(b):
                prop = u + steps[:, j]
                if stochastic:
                    lp = np.asarray(log_lik(prop, noise[:, j, 0]), dtype=float).reshape(K)
                    if refresh_current:
                        cur = np.asarray(log_lik(u, noise[:, j, 1]), dtype=float).reshape(K)
                else:
                    lp = np.asarray(log_lik(prop), dtype=float).reshape(K)
                qp = half_prior_quad(prop)
                log_alpha = (lp - cur) - qp + qu
                # NaN (both estimates zero) compares False, so the step is rejected
                ok = log_u[:, j] < log_alpha
                underflow += (~np.isfinite(lp) | ~np.isfinite(cur)) & ~ok
                u = np.where(ok[:, None], prop, u)
                cur = np.where(ok, lp, cur)
                qu = np.where(ok, qp, qu)
                i = start + j - config.burn_in
                if i >= 0:
                    states[:, i] = u
                    accepted[:, i] = ok
                    log_est[:, i] = cur

    step_evals = total * R * (M if stochastic else 1)
    chains = []
    for k, root in enumerate(roots):
        if underflow[k]:
            msg = f"{method or 'chain'} seed {root.seed}: {underflow[k]} steps with a non-finite likelihood estimate were rejected"
            warnings.warn(msg, EstimatorUnderflow, stacklevel=3)
            logger.warning(msg)
        chains.append(
            Chain(
                states=states[k],
                accepted=accepted[k],
                seed=root.seed,
                log_estimates=log_est[k],
                forward_evals=int(step_evals),
                initial_evals=int(init_evals),
                underflow_events=int(underflow[k]),
                method=method,
            )
        )
    return chains


def _estimator(obs: Observation, fmap):
    """Log of the ``M``-draw likelihood estimate, its noise sampler and noise width.

    The returned ``log_lik(u, omega)`` takes states ``(K, d)`` and noise
    ``(K, M, k)``. For linear maps the noise is whitened and scaled once
    per block when it is drawn, so each step only needs one small product.
    """
    if isinstance(fmap, RandomizedLinearForwardMap) and fmap.output_dim == obs.dim:
        W, A_h, y = obs.whitener, fmap.A_h, obs.y
        hW = fmap.h * W

        def draw(gen, size):
            return fmap.draw_noise(gen, size) @ hW.T

        def log_lik(u, eta):
            r = ((y - u @ A_h.T) @ W.T)[:, None, :] - eta
            return log_mean_exp(-(0.5 * np.sum(r * r, axis=-1)), axis=-1)

        return log_lik, draw, fmap.noise_dim

    def log_lik(u, omega):
        return log_mean_exp(-obs.potential(fmap.evaluate(u[:, None, :], omega)), axis=-1)

    return log_lik, fmap.draw_noise, fmap.noise_dim


def _run_estimated(obs, fmap, prior, config, seeds, refresh_current, method):
    roots = _roots(config, seeds)
    log_lik, draw, k = _estimator(obs, fmap)
    return _metropolis(
        prior, config, roots, _initial_states(prior, config, roots), log_lik,
        draw_noise=draw, noise_dim=k, refresh_current=refresh_current, method=method,
    )


def rwmh_many(log_unnormalized_target: Callable, prior: GaussianMeasure, config: ChainConfig, seeds=None) -> list[Chain]:
    """Run one RWMH chain per seed in lockstep.

    ``log_unnormalized_target`` is the log-likelihood ``-Phi`` (the prior
    enters through the acceptance ratio) and must accept a ``(K, d)`` array
    of states and return ``K`` values.
    """
    roots = _roots(config, seeds)
    return _metropolis(prior, config, roots, _initial_states(prior, config, roots), log_unnormalized_target, method="RWMH")


def rwmh(log_unnormalized_target: Callable, prior: GaussianMeasure, config: ChainConfig) -> Chain:
    """Random-walk Metropolis with a Gaussian prior.

    Proposals ``u + N(0, C_Q)`` are accepted with probability
    ``min(1, exp(l(u') - l(u) - |u' - m0|^2_{C0}/2 + |u - m0|^2_{C0}/2))``
    where ``l`` is ``log_unnormalized_target``, vectorized over a leading
    axis.

    Examples
    --------
    >>> import numpy as np
    >>> prior = GaussianMeasure(np.zeros(1), np.eye(1))
    >>> cfg = ChainConfig(n_steps=1000, proposal_covariance=np.eye(1), seed=3)
    >>> chain = rwmh(lambda u: np.zeros(len(u)), prior, cfg)
    >>> chain.states.shape
    (1000, 1)
    """
    return rwmh_many(log_unnormalized_target, prior, config)[0]


def pmmh_many(obs: Observation, fmap, prior: GaussianMeasure, config: ChainConfig, seeds=None) -> list[Chain]:
    return _run_estimated(obs, fmap, prior, config, seeds, False, "PMMH")


def pmmh(obs: Observation, fmap, prior: GaussianMeasure, config: ChainConfig) -> Chain:
    """Pseudo-marginal Metropolis-Hastings.

    Each step draws ``config.inner_M`` forward realizations at the proposal
    and compares their log-mean likelihood with the value stored for the
    current state. Because that value is never refreshed, the chain's
    marginal on parameter space is the marginal posterior exactly, at the
    price of sticking when an estimate happens to be large.
    """
    return pmmh_many(obs, fmap, prior, config)[0]


def mcwm_many(obs: Observation, fmap, prior: GaussianMeasure, config: ChainConfig, seeds=None) -> list[Chain]:
    return _run_estimated(obs, fmap, prior, config, seeds, True, "MCwM")


def mcwm(obs: Observation, fmap, prior: GaussianMeasure, config: ChainConfig) -> Chain:
    """Monte Carlo within Metropolis.

    Like :func:`pmmh` but the current state's likelihood is re-estimated
    with fresh draws on every step (``2 M`` forward evaluations per step).
    The chain no longer targets the marginal posterior exactly; the bias
    shrinks as ``M`` grows.
    """
    return mcwm_many(obs, fmap, prior, config)[0]


def mwmc(
    obs: Observation, fmap, prior: GaussianMeasure, config: ChainConfig, M: Optional[int] = None, xi=None
) -> MwmcSample:
    """Metropolis within Monte Carlo.

    Draws ``M`` (default ``config.inner_M``) noise realizations, freezes the
    randomized map at each of them and runs one RWMH chain of length
    ``config.n_steps`` per frozen map. All sub-chains start from the same
    point. The pooled states target the ``M``-sample mixture of sample
    posteriors. Pass ``xi`` (shape ``(M, k)``) to supply the noise draws.
    """
    root = SeededRng(config.seed)
    if xi is None:
        M = int(config.inner_M if M is None else M)
        if M < 1:
            raise ValueError(f"M must be at least 1, got {M}")
        xi = fmap.draw_noise(root.derive(FROZEN_MAP_STREAM).generator, (M,))
    else:
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        if M is not None and M != xi.shape[0]:
            raise DimensionMismatch(f"M = {M} but {xi.shape[0]} noise draws were given")
        M = xi.shape[0]
    sub_roots = [root.derive(SUBCHAIN_STREAM, i) for i in range(M)]
    if config.initial_state is not None:
        u0 = np.tile(config.initial_state, (M, 1))
    else:
        u0 = np.tile(prior.sample(root.derive(INIT_STREAM).generator), (M, 1))

    def log_lik(u):
        return -obs.potential(fmap.evaluate(u, xi))

    chains = _metropolis(prior, config, sub_roots, u0, log_lik, method="MwMC")
    return MwmcSample(sub_chains=tuple(chains), xi_draws=xi)
