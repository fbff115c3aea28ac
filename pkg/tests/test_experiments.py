import numpy as np
import pytest

from randpost.analytic import mixture_moments, sample_posterior
from randpost.errors import ConfigError
from randpost.experiments import (
    MCWM,
    MIXTURE,
    PMMH,
    RWMH_REFERENCE,
    AveragedExperimentConfig,
    MarginalExperimentConfig,
    SweepResult,
    TheoremCheckConfig,
    draw_linear_system,
    generate_problem,
    median_errors,
    rate_summary,
    run_averaged_experiment,
    run_marginal_experiment,
    run_theorem_check,
)
from randpost.rng import SeededRng


def test_generate_problem_reproducible():
    cfg = MarginalExperimentConfig(seed=5)
    a, b = generate_problem(cfg), generate_problem(cfg)
    np.testing.assert_array_equal(a.base.A, b.base.A)
    np.testing.assert_array_equal(a.base.y, b.base.y)
    c = generate_problem(MarginalExperimentConfig(seed=6))
    assert not np.array_equal(a.base.A, c.base.A)


def test_noiseless_data():
    A, y = draw_linear_system(SeededRng(0), 3, 3, [1.0, 2.0, 3.0], 0.0)
    np.testing.assert_array_equal(y, A @ np.array([1.0, 2.0, 3.0]))


def test_matrix_entries_in_range():
    for seed in range(1000):
        A, _ = draw_linear_system(SeededRng(seed, 1), 3, 3, np.zeros(3), 0.1)
        assert np.all(np.abs(A) < 1.0)


def test_problem_structure():
    p = generate_problem(MarginalExperimentConfig(sigma=0.2, h=0.125))
    assert p.h == 0.125
    np.testing.assert_allclose(p.base.gamma, 0.04 * np.eye(3))
    np.testing.assert_array_equal(p.P, np.eye(3))
    np.testing.assert_array_equal(p.Q, np.eye(3))
    np.testing.assert_array_equal(p.base.C0, np.eye(3))


def test_config_validation():
    with pytest.raises(ConfigError):
        MarginalExperimentConfig(sweep_variable="N")
    with pytest.raises(ConfigError):
        MarginalExperimentConfig(u_dagger=(1.0, 2.0))
    with pytest.raises(ConfigError):
        MarginalExperimentConfig(sweep_values=(1, 2.5))
    with pytest.raises(ConfigError):
        MarginalExperimentConfig(sweep_values=())
    with pytest.raises(ConfigError):
        MarginalExperimentConfig(methods=("HMC",))
    with pytest.raises(ConfigError):
        AveragedExperimentConfig(h_values=(0.1, -0.1))
    with pytest.raises(ConfigError):
        TheoremCheckConfig(M_values=(0, 4))


@pytest.fixture(scope="module")
def small_m_sweep():
    cfg = MarginalExperimentConfig(N=2000, replicates=2, sweep_values=(1, 4, 16))
    return cfg, run_marginal_experiment(cfg)


def test_marginal_rows_and_counters(small_m_sweep):
    cfg, rows = small_m_sweep
    assert len(rows) == 3 * 3 * 2
    assert [r.method for r in rows[:6]] == [RWMH_REFERENCE] * 6
    for r in rows:
        assert 0.0 <= r.acceptance_ratio <= 1.0
        assert r.mean_error >= 0.0 and r.cov_error >= 0.0
        expected = {RWMH_REFERENCE: cfg.N, PMMH: cfg.N * r.sweep_value, MCWM: 2 * cfg.N * r.sweep_value}
        assert r.forward_evals == expected[r.method]


def test_reference_rows_independent_of_M(small_m_sweep):
    _, rows = small_m_sweep
    ref = [r for r in rows if r.method == RWMH_REFERENCE]
    for rep in range(2):
        vals = {(r.acceptance_ratio, r.mean_error, r.cov_error) for r in ref if r.replicate == rep}
        assert len(vals) == 1


def test_marginal_rows_reproducible(small_m_sweep):
    cfg, rows = small_m_sweep
    again = run_marginal_experiment(cfg)
    key = lambda r: (r.method, r.sweep_value, r.replicate, r.acceptance_ratio, r.mean_error, r.cov_error)
    assert [key(r) for r in rows] == [key(r) for r in again]


def test_marginal_parallel_matches_serial(small_m_sweep):
    cfg, rows = small_m_sweep
    par = run_marginal_experiment(cfg, workers=2)
    assert [(r.mean_error, r.cov_error) for r in rows] == [(r.mean_error, r.cov_error) for r in par]


def test_rate_summary_keys(small_m_sweep):
    _, rows = small_m_sweep
    summary = rate_summary(rows)
    assert set(summary) == {f"{m}_{k}_slope" for m in ("rwmh", "pmmh", "mcwm") for k in ("mean", "cov")}
    assert summary["rwmh_mean_slope"] == pytest.approx(0.0, abs=1e-12)


def test_rate_summary_too_few_points():
    rows = [SweepResult(MCWM, "M", v, 0, 0.5, 1.0 / v, 1.0 / v, 1) for v in (1.0, 2.0)]
    assert rate_summary(rows) == {"mcwm_mean_slope": None, "mcwm_cov_slope": None}


def test_median_errors():
    rows = [SweepResult(PMMH, "M", 1.0, r, a, e, 2 * e, 1) for r, (a, e) in enumerate([(0.1, 1.0), (0.3, 3.0), (0.2, 2.0)])]
    values, acc, me, ce = median_errors(rows, PMMH)
    assert values == [1.0] and acc == [0.2] and me == [2.0] and ce == [4.0]


def test_sigma_and_h_sweeps_run():
    rows = run_marginal_experiment(MarginalExperimentConfig(N=500, replicates=1, sweep_variable="sigma", sweep_values=(0.1, 1.0)))
    assert {r.sweep_variable for r in rows} == {"sigma"}
    rows = run_marginal_experiment(MarginalExperimentConfig(N=500, replicates=1, sweep_variable="h", sweep_values=(0.5, 0.25), methods=(MCWM,)))
    assert [r.sweep_value for r in rows] == [0.25, 0.5]


@pytest.fixture(scope="module")
def small_averaged():
    cfg = AveragedExperimentConfig(h_values=(0.5, 0.25, 0.125), replicates=2, run_mwmc=True, N=2000, contour_nodes=41)
    return cfg, run_averaged_experiment(cfg)


def test_averaged_rows(small_averaged):
    cfg, res = small_averaged
    mix = [r for r in res.rows if r.method == MIXTURE]
    mw = [r for r in res.rows if r.method != MIXTURE]
    assert len(mix) == len(mw) == 6
    assert all(np.isnan(r.acceptance_ratio) and r.forward_evals == 0 for r in mix)
    assert all(r.forward_evals == cfg.N * cfg.M for r in mw)


def test_contour_grids(small_averaged):
    cfg, res = small_averaged
    assert [c.h for c in res.contours] == list(cfg.contour_h_values)
    for c in res.contours:
        assert c.points.shape == (41 * 41, 2) and c.M == cfg.contour_M
        assert c.masses[1] == pytest.approx(1.0, abs=1e-6)
    assert len(res.hellinger_comparison) == cfg.replicates


def test_averaged_reproducible(small_averaged):
    cfg, res = small_averaged
    again = run_averaged_experiment(cfg)
    assert [(r.mean_error, r.cov_error) for r in res.rows] == [(r.mean_error, r.cov_error) for r in again.rows]


def test_single_draw_mixture_has_no_spread():
    cfg = AveragedExperimentConfig()
    p = generate_problem(cfg).with_h(0.3)
    xi = p.forward_map.draw_noise(SeededRng(0), (1,))
    _, cov = mixture_moments(p, xi)
    np.testing.assert_allclose(cov, sample_posterior(p, xi[0]).covariance, atol=1e-15)


def test_theorem_check_h_zero_is_exact():
    cfg = TheoremCheckConfig(h_values=(0.0, 0.5), M_values=(1, 4), replicates=2, nodes=201)
    res = run_theorem_check(cfg)
    zero = [r for r in res.rows if r.h == 0.0]
    assert zero and all(r.rms_hellinger == 0.0 for r in zero)
    assert res.slope_vs_h is None and res.slope_vs_M is None


def test_theorem_check_small_run():
    cfg = TheoremCheckConfig(replicates=4, h_values=(0.5, 0.25, 0.125), M_values=(4, 16, 64), nodes=401)
    res = run_theorem_check(cfg, sweep="M")
    assert res.slope_vs_h is None and res.slope_vs_M is not None
    assert {r.M for r in res.rows} == {4, 16, 64}
    assert all(r.rms_hellinger > 0 for r in res.rows)
