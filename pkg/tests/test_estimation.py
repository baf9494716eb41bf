import dataclasses
import math

import numpy as np
import pytest

from locindep.basis import DesignBuilder, build_design, make_bspline_basis, roughness_penalty
from locindep.core import (
    DegenerateCovarianceError,
    DimensionMismatchError,
    ExponentialKernel,
    IntensityModelSpec,
    NoEventRowsWarning,
    SingularInformationError,
    make_link,
    validate_events,
)
from locindep.estimation import (
    FitConfig,
    chi2_upper_tail,
    fit_mle,
    penalized_hessian,
    penalized_loglik,
    penalized_score,
    wald_grid_test,
)
from locindep.simulate import SimulationConfig, simulate_hawkes

from oracles import central_diff_gradient, central_diff_jacobian, chi2_tail_reference


def _small_design(seed=0, order=2, d=2, horizon=60.0, test_mark=None, conditioning=(0,)):
    spec = IntensityModelSpec(
        d=d,
        baseline=np.full(d, 0.3),
        kernels={(0, k): ExponentialKernel(alpha=0.4, beta=0.8) for k in range(d)},
        link=make_link("piecewise"),
    )
    seq = simulate_hawkes(spec, SimulationConfig(horizon=horizon, burn_in=10.0, seed=seed))
    basis = make_bspline_basis(2.0, 4, degree=2)
    design = build_design(
        seq,
        basis,
        target=d - 1,
        conditioning=conditioning,
        order=order,
        test_mark=test_mark,
        delta=0.25,
    )
    return design, roughness_penalty(design)


def _random_beta(rng, design, link):
    # keep event-row predictors strictly positive so the identity link stays inside
    # the likelihood's domain
    beta = 0.05 * rng.standard_normal(design.p)
    beta[design.block_slice("intercept")] = 0.4
    if link.name == "identity":
        u = design.event_x @ beta
        if u.size and u.min() < 0.05:
            beta[design.block_slice("intercept")] += 0.05 - u.min()
    return beta


# --- closed forms and trivia --------------------------------------------------------

def test_loglik_closed_form_at_zero_piecewise():
    design, penalty = _small_design(order=1)
    link = make_link("piecewise")
    t0, t1 = design.window
    value = penalized_loglik(np.zeros(design.p), design, link, penalty, kappa0=0.0)
    # each event contributes log(e^{-1}) = -1; compensator is e^{-1} per unit time
    expected = -design.n_events - math.exp(-1.0) * (t1 - t0)
    assert abs(value - expected) < 1e-10


def test_penalty_term_inactive_at_kappa_zero():
    design, penalty = _small_design(order=2)
    link = make_link("log")
    rng = np.random.default_rng(5)
    beta = 0.1 * rng.standard_normal(design.p)
    zero_pen = dataclasses.replace(penalty, matrix=np.zeros_like(penalty.matrix))
    a = penalized_loglik(beta, design, link, penalty, kappa0=0.0)
    b = penalized_loglik(beta, design, link, zero_pen, kappa0=0.0)
    assert a == b


def test_loglik_minus_inf_on_nonpositive_event_intensity():
    design, penalty = _small_design(order=1)
    link = make_link("identity")
    beta = np.zeros(design.p)
    beta[design.block_slice("intercept")] = -1.0
    assert penalized_loglik(beta, design, link, penalty, 1.0) == -np.inf


def test_loglik_dimension_mismatch():
    design, penalty = _small_design(order=1)
    with pytest.raises(DimensionMismatchError):
        penalized_loglik(np.zeros(design.p + 1), design, make_link("log"), penalty, 1.0)


# --- derivative checks against finite differences ------------------------------------

@pytest.mark.parametrize("link_name", ["identity", "log", "piecewise"])
def test_score_matches_finite_differences(link_name):
    design, penalty = _small_design(order=2)
    link = make_link(link_name)
    rng = np.random.default_rng(17)
    for _ in range(20):
        beta = _random_beta(rng, design, link)
        num = central_diff_gradient(
            lambda b: penalized_loglik(b, design, link, penalty, 1.0), beta, h=1e-6
        )
        ana = penalized_score(beta, design, link, penalty, 1.0)
        scale = np.maximum(np.abs(num), 1.0)
        assert np.max(np.abs(ana - num) / scale) < 1e-5


@pytest.mark.parametrize("link_name", ["identity", "log", "piecewise"])
def test_hessian_matches_finite_differences(link_name):
    design, penalty = _small_design(order=2)
    link = make_link(link_name)
    rng = np.random.default_rng(23)
    for _ in range(5):
        beta = _random_beta(rng, design, link)
        num = central_diff_jacobian(
            lambda b: penalized_score(b, design, link, penalty, 1.0), beta, h=1e-6
        )
        ana = penalized_hessian(beta, design, link, penalty, 1.0)
        scale = np.maximum(np.abs(num), 1.0)
        assert np.max(np.abs(ana - num) / scale) < 1e-5


# --- fitting ---------------------------------------------------------------------------

def test_poisson_mle_is_event_rate():
    spec = IntensityModelSpec(d=1, baseline=np.array([0.25]), link=make_link("identity"))
    for seed in (0, 1, 2):
        seq = simulate_hawkes(spec, SimulationConfig(horizon=500.0, burn_in=0.0, seed=seed))
        basis = make_bspline_basis(5.0, 6)
        design = build_design(
            seq, basis, target=0, order=1, include_target_history=False, delta=0.1
        )
        penalty = roughness_penalty(design)
        fit = fit_mle(design, make_link("identity"), penalty, FitConfig(kappa0=0.0))
        rate_hat = float(fit.coef("intercept")[0])
        assert fit.converged
        # identity-link Poisson MLE is exactly count / window length
        assert abs(rate_hat - seq.n / 500.0) < 1e-9
        assert abs(rate_hat - 0.25) < 4.0 * math.sqrt(0.25 / 500.0)


def test_newton_path_is_monotone_and_reported():
    design, penalty = _small_design(order=2, test_mark=0, conditioning=())
    fit = fit_mle(design, make_link("piecewise"), penalty)
    assert fit.converged
    assert np.all(np.diff(fit.value_path) >= 0.0)
    assert fit.loglik == fit.value_path[-1]
    assert fit.grad_norm < 1e-8 * max(1.0, abs(fit.loglik))


def test_sandwich_identities():
    design, penalty = _small_design(order=2)
    fit = fit_mle(design, make_link("piecewise"), penalty, FitConfig(kappa0=1.0))
    assert np.array_equal(fit.J_hat, fit.K_hat + 2.0 * penalty.matrix)
    for M in (fit.K_hat, fit.J_hat, fit.Sigma):
        assert np.max(np.abs(M - M.T)) < 1e-10
    # Sigma is a congruence of the PSD K_hat
    eigvals = np.linalg.eigvalsh(fit.Sigma)
    assert eigvals.min() > -1e-8


def test_sandwich_collapses_without_penalty():
    design, penalty = _small_design(order=1)
    fit = fit_mle(design, make_link("piecewise"), penalty, FitConfig(kappa0=0.0))
    assert np.array_equal(fit.J_hat, fit.K_hat)
    assert np.allclose(fit.Sigma @ fit.K_hat, np.eye(design.p), atol=1e-8)
    assert np.allclose(fit.mu, fit.beta)


def test_compensator_only_fit_warns():
    seq = validate_events([1.0, 2.0, 3.5], [0, 0, 0], window=(0.0, 30.0), d=2)
    basis = make_bspline_basis(2.0, 4, degree=2)
    design = build_design(
        seq, basis, target=1, conditioning=(0,), order=1,
        include_target_history=False, delta=0.25,
    )
    penalty = roughness_penalty(design)
    with pytest.warns(NoEventRowsWarning):
        fit_mle(design, make_link("piecewise"), penalty, FitConfig(max_iter=5))


def test_singular_information_without_penalty():
    # conditioning mark has no events: its columns vanish and K_hat is singular
    seq = validate_events([1.0, 2.0, 3.5, 7.0], [0, 0, 0, 0], window=(0.0, 30.0), d=2)
    basis = make_bspline_basis(2.0, 4, degree=2)
    design = build_design(
        seq, basis, target=0, conditioning=(1,), order=1,
        include_target_history=False, delta=0.25,
    )
    penalty = roughness_penalty(design)
    with pytest.raises(SingularInformationError):
        fit_mle(design, make_link("identity"), penalty, FitConfig(kappa0=0.0))


def test_hawkes_kernel_integral_recovery():
    spec = IntensityModelSpec(
        d=1,
        baseline=np.array([0.25]),
        kernels={(0, 0): ExponentialKernel(alpha=0.4, beta=0.8)},
        link=make_link("identity"),
    )
    basis = make_bspline_basis(5.0, 6)
    integrals = []
    for seed in range(20):
        seq = simulate_hawkes(spec, SimulationConfig(horizon=2000.0, burn_in=50.0, seed=seed))
        design = build_design(seq, basis, target=0, conditioning=(0,), order=1, delta=0.1)
        fit = fit_mle(design, make_link("identity"), roughness_penalty(design))
        integrals.append(float(basis.integrals @ fit.coef("first:0")))
    med = float(np.median(integrals))
    assert abs(med - 0.4) < 0.25 * 0.4


# --- chi-squared tail -------------------------------------------------------------------

def test_chi2_tail_trivia_and_closed_form():
    assert chi2_upper_tail(0.0, 1) == 1.0
    assert chi2_upper_tail(0.0, 7) == 1.0
    # df = 2 tail is exp(-x/2)
    assert abs(chi2_upper_tail(2.0 * math.log(20.0), 2) - 0.05) < 1e-12
    assert abs(chi2_upper_tail(5.991, 2) - 0.05) < 1e-3
    with pytest.raises(ValueError):
        chi2_upper_tail(-1.0, 2)
    with pytest.raises(ValueError):
        chi2_upper_tail(1.0, 0)


def test_chi2_tail_against_series_reference():
    for df in (1, 2, 3, 5, 10, 40):
        for x in (0.01, 0.5, 1.0, 3.7, 10.0, 55.0):
            assert abs(chi2_upper_tail(x, df) - chi2_tail_reference(x, df)) < 1e-10


def test_chi2_tail_monotone():
    xs = np.linspace(0.0, 30.0, 301)
    for df in (1, 3, 8):
        vals = [chi2_upper_tail(float(x), df) for x in xs]
        assert np.all(np.diff(vals) <= 0.0)


# --- grid Wald test -----------------------------------------------------------------------

@pytest.fixture(scope="module")
def wald_fit():
    design, penalty = _small_design(seed=2, order=2, test_mark=0, conditioning=(), horizon=120.0)
    return fit_mle(design, make_link("piecewise"), penalty)


def test_wald_defaults_and_pvalue_identity(wald_fit):
    res = wald_grid_test(wald_fit)
    K = wald_fit.design.basis.num_basis
    assert res.block == "test:0"
    assert res.grid.shape == (K,)
    assert res.df == K
    assert res.statistic >= 0.0
    assert res.p_value == chi2_upper_tail(res.statistic, res.df)


def test_wald_scalar_reduction(wald_fit):
    res = wald_grid_test(wald_fit, num_points=1)
    basis = wald_fit.design.basis
    sl = wald_fit.design.block_slice("test:0")
    B = basis.evaluate(basis.grid(1))
    v = float((B @ wald_fit.beta[sl])[0])
    V = float((B @ wald_fit.Sigma[sl, sl] @ B.T)[0, 0])
    assert res.df == 1
    assert abs(res.statistic - v * v / V) < 1e-10 * max(1.0, abs(res.statistic))
    assert abs(res.p_value - chi2_upper_tail(res.statistic, 1)) < 1e-15


def test_wald_zero_coefficients_give_p_one(wald_fit):
    beta = wald_fit.beta.copy()
    beta[wald_fit.design.block_slice("test:0")] = 0.0
    res = wald_grid_test(dataclasses.replace(wald_fit, beta=beta))
    assert res.statistic == 0.0
    assert res.p_value == 1.0


def test_wald_invariant_under_joint_rescaling(wald_fit):
    # scaling the block coefficients by c and its covariance by c^2 is a
    # reparameterization that must leave the statistic unchanged
    sl = wald_fit.design.block_slice("test:0")
    c = 3.7
    beta = wald_fit.beta.copy()
    beta[sl] *= c
    Sigma = wald_fit.Sigma.copy()
    Sigma[sl, sl] *= c * c
    base = wald_grid_test(wald_fit)
    scaled = wald_grid_test(dataclasses.replace(wald_fit, beta=beta, Sigma=Sigma))
    assert scaled.df == base.df
    assert abs(scaled.statistic - base.statistic) < 1e-9 * max(1.0, base.statistic)


def test_wald_rank_deficient_covariance_reduces_df(wald_fit):
    sl = wald_fit.design.block_slice("test:0")
    K = sl.stop - sl.start
    v = np.linspace(1.0, 2.0, K)
    Sigma = wald_fit.Sigma.copy()
    Sigma[sl, sl] = np.outer(v, v)
    res = wald_grid_test(dataclasses.replace(wald_fit, Sigma=Sigma))
    assert res.df == 1
    assert res.p_value == chi2_upper_tail(res.statistic, 1)


def test_wald_degenerate_covariance_raises(wald_fit):
    sl = wald_fit.design.block_slice("test:0")
    Sigma = wald_fit.Sigma.copy()
    Sigma[sl, sl] = 0.0
    with pytest.raises(DegenerateCovarianceError):
        wald_grid_test(dataclasses.replace(wald_fit, Sigma=Sigma))


def test_wald_rejects_pair_blocks(wald_fit):
    with pytest.raises(DimensionMismatchError):
        wald_grid_test(wald_fit, block="pair:1:1")


def test_config_validation():
    with pytest.raises(ValueError):
        FitConfig(kappa0=-1.0)
    with pytest.raises(ValueError):
        FitConfig(grad_tol=0.0)
    with pytest.raises(ValueError):
        FitConfig(max_iter=0)


def test_fit_report_serializes():
    import json

    design, penalty = _small_design(order=1, test_mark=0, conditioning=())
    fit = fit_mle(design, make_link("piecewise"), penalty)
    report = json.loads(fit.to_json())
    assert set(report) == {"coefficients", "convergence", "sigma_diagonal"}
    assert set(report["coefficients"]) == set(design.block_names())
    assert report["convergence"]["converged"] is True


def test_quadrature_refinement_stabilizes_fit():
    spec = IntensityModelSpec(
        d=1,
        baseline=np.array([0.3]),
        kernels={(0, 0): ExponentialKernel(alpha=0.4, beta=0.8)},
        link=make_link("piecewise"),
    )
    seq = simulate_hawkes(spec, SimulationConfig(horizon=300.0, burn_in=20.0, seed=9))
    basis = make_bspline_basis(5.0, 6)
    fits = []
    for delta in (0.2, 0.1, 0.05):
        design = build_design(seq, basis, target=0, conditioning=(0,), order=1, delta=delta)
        fits.append(fit_mle(design, make_link("piecewise"), roughness_penalty(design)).beta)
    gap_coarse = np.max(np.abs(fits[0] - fits[2]))
    gap_fine = np.max(np.abs(fits[1] - fits[2]))
    assert gap_fine < gap_coarse
    assert gap_fine < 0.05
