import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from randpost.analytic import LinearGaussianProblem, RandomizedLinearGaussianProblem, log_evidence, marginal_log_likelihood
from randpost.errors import DimensionMismatch, InsufficientData, NonPositiveWeight, UnsupportedDimension
from randpost.forward import RandomizedLinearForwardMap
from randpost.gaussian import GaussianMeasure
from randpost.potential import (
    PRIOR_MONTE_CARLO,
    TENSOR_QUADRATURE,
    LikelihoodBatch,
    Observation,
    estimator_variance_sweep,
    log_mean_exp,
    mc_likelihood,
    normalizing_constant,
    potential_exact,
    quadrature_rule,
    weighted_mc_likelihood,
)
from randpost.rng import SeededRng


def test_potential_examples():
    obs = Observation([1.0, 2.0], np.eye(2))
    assert potential_exact(obs, [1.0, 2.0]) == 0.0
    assert potential_exact(obs, [-2.0, -2.0]) == pytest.approx(12.5)
    obs = Observation.isotropic([0.1, 0.0, 0.0], 0.1)
    assert potential_exact(obs, np.zeros(3)) == pytest.approx(0.5)
    with pytest.raises(DimensionMismatch):
        obs.potential(np.zeros(2))


def test_whitener():
    rng = np.random.default_rng(0)
    G = rng.standard_normal((3, 3))
    gamma = G @ G.T + np.eye(3)
    W = Observation(np.zeros(3), gamma).whitener
    inv = np.linalg.inv(gamma)
    assert np.linalg.norm(W.T @ W - inv) / np.linalg.norm(inv) <= 1e-10


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-800, 50), min_size=1, max_size=20))
def test_log_mean_exp_matches_direct(xs):
    x = np.array(xs)
    shift = x.max()
    assert log_mean_exp(x) == pytest.approx(shift + np.log(np.mean(np.exp(x - shift))), rel=1e-12, abs=1e-12)


def test_log_mean_exp_all_neg_inf():
    assert log_mean_exp(np.array([-np.inf, -np.inf])) == -np.inf


def test_mc_likelihood_single_draw_and_values_range(scalar_problem):
    p = scalar_problem
    b = mc_likelihood(p.observation, p.forward_map, [0.3], 1, SeededRng(0))
    assert b.M == 1
    assert b.mean == pytest.approx(float(b.values[0]))
    b = mc_likelihood(p.observation, p.forward_map, [0.3], 50, SeededRng(0))
    assert np.all((b.values > 0) & (b.values <= 1))
    assert len(b.seeds_used) == 50 and len(set(b.seeds_used)) == 50


def test_mc_likelihood_h_zero(scalar_problem):
    p = scalar_problem.with_h(0.0)
    b = mc_likelihood(p.observation, p.forward_map, [0.3], 20, np.random.default_rng(1))
    assert np.all(b.values == b.values[0])
    assert b.values[0] == pytest.approx(np.exp(-0.5 * 0.7**2))


def test_mc_likelihood_unbiased(random_problem):
    p = random_problem
    u = np.array([0.2, -0.1, 0.4])
    b = mc_likelihood(p.observation, p.forward_map, u, 10_000, np.random.default_rng(2))
    exact = np.exp(marginal_log_likelihood(p, u))
    se = b.values.std(ddof=1) / np.sqrt(b.M)
    assert abs(b.mean - exact) < 3 * se


def test_mc_likelihood_replicate_unbiasedness(scalar_problem):
    p = scalar_problem
    u = np.array([0.4])
    gen = np.random.default_rng(3)
    omega = p.forward_map.draw_noise(gen, (10_000, 8))
    est = np.exp(log_mean_exp(-p.observation.potential(p.forward_map.evaluate(u, omega))))
    exact = np.exp(marginal_log_likelihood(p, u))
    assert abs(est.mean() - exact) < 3 * est.std(ddof=1) / np.sqrt(est.size)


def test_normalizing_constant_unit_likelihood():
    obs = Observation([0.0], [[1.0]])
    prior = GaussianMeasure([0.0], [[1.0]])
    est = normalizing_constant(obs, lambda u: 0.0 * u, prior)
    assert est.value == pytest.approx(1.0, abs=1e-12)
    assert est.method == TENSOR_QUADRATURE


def test_normalizing_constant_matches_evidence_1d():
    p = LinearGaussianProblem([[1.3]], [[0.4]], [0.2], [[1.5]], [0.9])
    est = normalizing_constant(p.observation, lambda u: u @ p.A.T, p.prior, resolution=401)
    assert est.sample_count_or_nodes == 401
    assert est.value == pytest.approx(np.exp(log_evidence(p)), rel=1e-6)


def test_normalizing_constant_methods_agree():
    rng = np.random.default_rng(2)
    A = rng.uniform(-1, 1, (3, 3))
    p = LinearGaussianProblem(A, 0.5 * np.eye(3), np.zeros(3), np.eye(3), rng.standard_normal(3))
    q = normalizing_constant(p.observation, lambda u: u @ p.A.T, p.prior)
    mc = normalizing_constant(p.observation, lambda u: u @ p.A.T, p.prior, method=PRIOR_MONTE_CARLO, rng=SeededRng(4))
    assert mc.sample_count_or_nodes == 100_000
    assert abs(q.value - mc.value) < 3 * mc.std_error
    assert q.value == pytest.approx(np.exp(log_evidence(p)), rel=1e-6)


def test_normalizing_constant_resolution_on_peaked_problem(random_problem):
    p = random_problem.base
    exact = np.exp(log_evidence(p))
    errs = [
        abs(normalizing_constant(p.observation, lambda u: u @ p.A.T, p.prior, resolution=n).value / exact - 1)
        for n in (24, 60)
    ]
    assert errs[1] < errs[0] and errs[1] < 1e-3


def test_normalizing_constant_dimension_guard():
    prior = GaussianMeasure(np.zeros(4), np.eye(4))
    obs = Observation(np.zeros(4), np.eye(4))
    with pytest.raises(UnsupportedDimension):
        normalizing_constant(obs, lambda u: u, prior, method=TENSOR_QUADRATURE)
    est = normalizing_constant(obs, lambda u: u, prior, rng=SeededRng(0), resolution=20_000)
    assert est.method == PRIOR_MONTE_CARLO
    # y = u with unit noise and prior: Z = 2^{-d/2}
    assert est.value == pytest.approx(0.25, abs=4 * est.std_error)


def test_quadrature_rule_weights_sum_to_one():
    prior = GaussianMeasure([1.0, -1.0], [[2.0, 0.3], [0.3, 1.0]])
    pts, logw = quadrature_rule(prior, 20)
    w = np.exp(logw)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(w @ pts, prior.mean, atol=1e-12)


def test_weighted_estimator_special_cases():
    logs = np.log([0.2, 0.5, 0.1])
    assert weighted_mc_likelihood(logs, [2.0, 2.0, 2.0]) == pytest.approx(np.mean([0.2, 0.5, 0.1]))
    assert weighted_mc_likelihood(LikelihoodBatch(np.log([0.3]), np.zeros(1)), [0.7]) == pytest.approx(0.3)
    with pytest.raises(NonPositiveWeight):
        weighted_mc_likelihood(logs, [1.0, 0.0, 1.0])
    with pytest.raises(DimensionMismatch):
        weighted_mc_likelihood(logs, [1.0, 1.0])


def test_weighted_estimator_integrates_to_z(scalar_problem):
    p = scalar_problem
    xi = p.forward_map.draw_noise(SeededRng(5), (6,))
    obs, prior, fmap = p.observation, p.prior, p.forward_map
    z = np.array([normalizing_constant(obs, fmap.freeze(w), prior).value for w in xi])
    pts, logw = quadrature_rule(prior, 201)
    log_l = -obs.potential(fmap.evaluate(pts[:, None, :], xi[None, :, :]))
    vals = weighted_mc_likelihood(log_l, z)
    assert np.exp(logw) @ vals == pytest.approx(z.mean(), abs=1e-6)


def test_variance_sweep_scaling(random_problem):
    p = random_problem
    u = p.prior.mean
    family = lambda h: RandomizedLinearForwardMap(p.base.A, h, p.P, p.Q)  # noqa: E731
    rows = estimator_variance_sweep(p.observation, family, u, [0.0, 0.1, 0.05], 4, 200, SeededRng(6))
    assert rows[0].var_likelihood == 0.0
    assert rows[1].var_likelihood > rows[2].var_likelihood > 0
    assert np.isnan(rows[1].var_normalizer)
    with pytest.raises(InsufficientData):
        estimator_variance_sweep(p.observation, family, u, [0.1], 4, 50, SeededRng(6))


def test_variance_halves_when_M_doubles(scalar_problem):
    p = scalar_problem
    family = lambda h: RandomizedLinearForwardMap(p.base.A, h, p.P, p.Q)  # noqa: E731
    hs = [0.2, 0.1, 0.05]
    ratios = []
    for M in (8, 16):
        rows = estimator_variance_sweep(p.observation, family, [0.5], hs, M, 4000, SeededRng(M))
        ratios.append([r.var_likelihood for r in rows])
    assert np.mean(np.array(ratios[0]) / np.array(ratios[1])) == pytest.approx(2.0, rel=0.2)


def test_variance_sweep_normalizer(scalar_problem):
    p = scalar_problem
    family = lambda h: RandomizedLinearForwardMap(p.base.A, h, p.P, p.Q)  # noqa: E731
    rows = estimator_variance_sweep(p.observation, family, [0.5], [0.0, 0.2], 4, 100, SeededRng(7), prior=p.prior)
    assert rows[0].var_normalizer == pytest.approx(0.0, abs=1e-24)
    assert rows[1].var_normalizer > 0
