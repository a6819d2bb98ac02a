"""Endogenous-input estimators: corrected 2SLS, joint MLE, and moment fits."""

import math

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from causalsfa.data import Dataset
from causalsfa.distributions import (
    ComposedErrorParams,
    composed_error_logpdf_rowwise,
)
from causalsfa.endogeneity import (
    ApsParams,
    EndoSpec,
    aps_loglik,
    c2sls_fit,
    fit_aps_mle,
    gmm_fit,
    gmm_moments,
)
from causalsfa.errors import DomainError, IdentificationError
from causalsfa.sfa import fit_sfa_cols, fit_sfa_mle
from causalsfa.simulate import SimDesign, generate

_SPEC = EndoSpec(endogenous_cols=("x1",), instrument_cols=("w1",))


def _draw(seed, n=2000, **overrides):
    return generate(SimDesign("endogenous", seed=seed, params=dict(overrides, n=n)))


def _truth_params():
    return ApsParams(
        beta=np.array([1.0, 0.7]),
        sigma_v=0.4,
        sigma_u=0.6,
        gamma=np.array([[1.0]]),
        delta=np.array([[0.5]]),
        cov_v_eta=np.array([0.5]),
        cov_eta=np.array([[1.5**2]]),
    )


def test_spec_validation():
    with pytest.raises(DomainError, match="endogenous"):
        EndoSpec(endogenous_cols=(), instrument_cols=("w1",))
    with pytest.raises(DomainError, match="instrument"):
        EndoSpec(endogenous_cols=("x1",), instrument_cols=())
    with pytest.raises(DomainError, match="duplicate"):
        EndoSpec(endogenous_cols=("x1", "x1"), instrument_cols=("w1",))
    with pytest.raises(DomainError, match="both"):
        EndoSpec(endogenous_cols=("x1",), instrument_cols=("w1",), exogenous_cols=("x1",))
    with pytest.raises(DomainError, match="outcome"):
        EndoSpec(endogenous_cols=("y",), instrument_cols=("w1",))
    with pytest.raises(IdentificationError, match="instruments"):
        EndoSpec(endogenous_cols=("x1", "x2"), instrument_cols=("w1",))
    spec = EndoSpec(
        endogenous_cols=("x2",), instrument_cols=("w1",), exogenous_cols=("x1",)
    )
    assert spec.coef_names() == ("const", "x1", "x2")


def test_self_instrument_collapses_to_corrected_ols():
    data = generate(SimDesign("cross_section", seed=80, params={"n": 800}))
    degenerate = EndoSpec(endogenous_cols=("x1",), instrument_cols=("x1",))
    iv = c2sls_fit(data, degenerate)
    plain = fit_sfa_cols(data)
    assert np.max(np.abs(iv.beta - plain.beta)) < 1e-8
    assert abs(iv.params.sigma_v - plain.params.sigma_v) < 1e-8
    assert abs(iv.params.sigma_u - plain.params.sigma_u) < 1e-8
    assert iv.first_stage_r2 == (1.0,)


def test_c2sls_removes_endogeneity_bias():
    data = _draw(81, n=20000)
    iv = c2sls_fit(data, _SPEC)
    naive = fit_sfa_cols(data)
    assert abs(iv.beta[1] - 0.7) < 0.03
    assert abs(iv.beta[0] - 1.0) < 0.05
    assert abs(iv.params.sigma_u - 0.6) < 0.08
    # the uninstrumented slope absorbs the noise/first-stage covariance
    assert abs(naive.beta[1] - 0.7) > 0.1


def test_c2sls_first_stage_r2_manual():
    data = _draw(82, n=500).canonical_order()
    iv = c2sls_fit(data, _SPEC)
    x2 = data.col("x1")
    fs = np.column_stack([np.ones(data.n), data.col("w1")])
    coefs = np.linalg.lstsq(fs, x2, rcond=None)[0]
    resid = x2 - fs @ coefs
    r2 = 1.0 - float(resid @ resid) / float(np.sum((x2 - x2.mean()) ** 2))
    assert abs(iv.first_stage_r2[0] - r2) < 1e-10


def test_c2sls_slope_se_manual_oracle():
    data = _draw(83, n=1000).canonical_order()
    iv = c2sls_fit(data, _SPEC)
    y, x2, w = data.col("y"), data.col("x1"), data.col("w1")
    fs = np.column_stack([np.ones(data.n), w])
    fitted = fs @ np.linalg.lstsq(fs, x2, rcond=None)[0]
    x_hat = np.column_stack([np.ones(data.n), fitted])
    beta_2sls = np.linalg.lstsq(x_hat, y, rcond=None)[0]
    eps = y - np.column_stack([np.ones(data.n), x2]) @ beta_2sls
    m2 = float(np.mean((eps - eps.mean()) ** 2))
    cov = m2 * np.linalg.inv(x_hat.T @ x_hat)
    assert abs(iv.se[1] - math.sqrt(cov[1, 1])) < 1e-10
    assert np.isnan(iv.se[0])  # corrected intercept has no closed form
    assert np.isnan(iv.se[2]) and np.isnan(iv.se[3])


def test_c2sls_weak_instruments_flag():
    data = _draw(84, n=2000, gamma_w=(0.001,))
    iv = c2sls_fit(data, _SPEC)
    assert "weak_instruments" in iv.flags


def test_aps_params_validation():
    with pytest.raises(DomainError, match="shapes"):
        ApsParams(
            beta=np.zeros(2), sigma_v=0.4, sigma_u=0.6,
            gamma=np.zeros((1, 2)), delta=np.zeros((1, 1)),
            cov_v_eta=np.zeros(1), cov_eta=np.eye(1),
        )
    with pytest.raises(DomainError, match="positive definite"):
        ApsParams(
            beta=np.zeros(2), sigma_v=0.4, sigma_u=0.6,
            gamma=np.zeros((1, 1)), delta=np.zeros((1, 1)),
            cov_v_eta=np.zeros(1), cov_eta=-np.eye(1),
        )
    with pytest.raises(DomainError, match="conditional noise"):
        ApsParams(  # cov_v_eta too large for sigma_v
            beta=np.zeros(2), sigma_v=0.4, sigma_u=0.6,
            gamma=np.zeros((1, 1)), delta=np.zeros((1, 1)),
            cov_v_eta=np.array([1.0]), cov_eta=np.eye(1),
        )
    p = _truth_params()
    expected = math.sqrt(0.4**2 - 0.5**2 / 1.5**2)
    assert abs(p.sigma_c - expected) < 1e-15


def test_aps_loglik_factorizes_when_noise_independent():
    data = _draw(85, n=300)
    p = ApsParams(
        beta=np.array([
            1.0, 0.7]),
        sigma_v=0.4,
        sigma_u=0.6,
        gamma=np.array([[1.0]]),
        delta=np.array([[0.5]]),
        cov_v_eta=np.array([0.0]),  # independence: the joint density factors
        cov_eta=np.array([[2.25]]),
    )
    joint = aps_loglik(data, _SPEC, p)
    y, x2, w = data.col("y"), data.col("x1"), data.col("w1")
    eps = y - 1.0 - 0.7 * x2
    eta = x2 - 0.5 - 1.0 * w
    ll_outcome = float(np.sum(composed_error_logpdf_rowwise(eps, 0.4, 0.6)))
    ll_first = float(np.sum(multivariate_normal.logpdf(eta[:, None], cov=[[2.25]])))
    assert abs(joint - (ll_outcome + ll_first)) < 1e-10 * max(1.0, abs(joint))


def test_aps_loglik_shape_validation():
    data = _draw(85, n=50)
    p = _truth_params()
    wrong_beta = ApsParams(
        beta=np.array([1.0, 0.7, 0.1]), sigma_v=0.4, sigma_u=0.6,
        gamma=np.array([[1.0]]), delta=np.array([[0.5]]),
        cov_v_eta=np.array([0.5]), cov_eta=np.array([[2.25]]),
    )
    with pytest.raises(DomainError, match="beta"):
        aps_loglik(data, _SPEC, wrong_beta)
    assert math.isfinite(aps_loglik(data, _SPEC, p))


def test_aps_mle_recovers_truth_and_beats_truth_loglik():
    data = _draw(86, n=8000)
    fit = fit_aps_mle(data, _SPEC, compute_se=False)
    assert fit.converged
    p = fit.params
    assert abs(p.beta[1] - 0.7) < 0.05
    assert abs(p.beta[0] - 1.0) < 0.07
    assert abs(p.sigma_u - 0.6) < 0.07
    assert abs(p.sigma_v - 0.4) < 0.05
    assert abs(p.cov_v_eta[0] - 0.5) < 0.07
    assert abs(p.cov_eta[0, 0] - 2.25) < 0.12
    assert fit.loglik >= aps_loglik(data, _SPEC, _truth_params()) - 1e-6


def test_aps_mle_reports_standard_errors():
    data = _draw(87, n=3000)
    fit = fit_aps_mle(data, _SPEC)
    assert fit.se is not None
    assert len(fit.se) == len(fit.se_names)
    assert "const" in fit.se_names and "sigma_u" in fit.se_names
    named = dict(zip(fit.se_names, fit.se))
    assert named["x1"] > 0


def test_gmm_moments_vanish_at_uninstrumented_mle():
    data = generate(SimDesign("cross_section", seed=88, params={"n": 500}))
    fit = fit_sfa_mle(data, compute_se=False)
    degenerate = EndoSpec(endogenous_cols=("x1",), instrument_cols=("x1",))
    moments = gmm_moments(data, degenerate, fit.beta, fit.params)
    assert np.max(np.abs(moments)) < 1e-6


def test_gmm_moments_beta_length_validation():
    data = _draw(89, n=50)
    with pytest.raises(DomainError, match="beta"):
        gmm_moments(data, _SPEC, np.zeros(5), ComposedErrorParams(0.4, 0.6))


def test_gmm_fit_recovers_truth_just_identified():
    data = _draw(90, n=10000)
    fit = gmm_fit(data, _SPEC)
    assert fit.converged
    assert abs(fit.beta[1] - 0.7) < 0.05
    assert abs(fit.beta[0] - 1.0) < 0.10
    assert abs(fit.params.sigma_u - 0.6) < 0.10
    assert fit.j_stat >= 0.0
    # just identified: every moment is driven to zero
    assert np.max(np.abs(fit.moments)) < 1e-5


def test_gmm_fit_overidentified_j_stat():
    data = _draw(91, n=4000, gamma_w=(1.0, 0.8))
    spec = EndoSpec(endogenous_cols=("x1",), instrument_cols=("w1", "w2"))
    fit = gmm_fit(data, spec)
    assert fit.j_stat >= 0.0
    assert math.isfinite(fit.j_stat)
    assert abs(fit.beta[1] - 0.7) < 0.07


def test_gmm_wrong_skew_reports_zero_scale():
    rng = np.random.default_rng(92)
    n = 3000
    x1 = rng.standard_normal(n)
    y = 1.0 + 0.7 * x1 + (rng.exponential(0.5, n) - 0.5)
    data = Dataset({"y": y, "x1": x1, "w1": x1 + 0.0})
    fit = gmm_fit(data, _SPEC)
    assert "wrong_skew" in fit.flags
    assert fit.params.sigma_u == 0.0
    assert fit.params.sigma_v > 0.0


def test_fits_are_permutation_invariant_bitwise():
    data = _draw(93, n=600)
    perm = np.random.default_rng(4).permutation(600)
    shuffled = Dataset({name: data.col(name)[perm] for name in data.names})
    a, b = c2sls_fit(data, _SPEC), c2sls_fit(shuffled, _SPEC)
    assert np.array_equal(a.beta, b.beta)
    ga, gb = gmm_fit(data, _SPEC), gmm_fit(shuffled, _SPEC)
    assert np.array_equal(ga.beta, gb.beta)
    assert ga.j_stat == gb.j_stat
    fa = fit_aps_mle(data, _SPEC, compute_se=False)
    fb = fit_aps_mle(shuffled, _SPEC, compute_se=False)
    assert np.array_equal(fa.params.beta, fb.params.beta)
    assert fa.loglik == fb.loglik
