"""Distribution layer: densities, moments, and their quadrature oracles."""

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import norm

from causalsfa.distributions import (
    HALF_NORMAL_MEAN_COEF,
    HALF_NORMAL_SKEW_COEF,
    HALF_NORMAL_VAR_COEF,
    ComposedErrorParams,
    FoldedNormalCondParams,
    composed_error_logpdf,
    folded_normal_cond_pdf,
    halfnormal_moments,
    std_normal_cdf,
    std_normal_logcdf,
    std_normal_pdf,
)
from causalsfa.errors import DomainError


def test_halfnormal_constants_match_quadrature():
    sigma = 0.7

    def density(u):
        return 2.0 / (sigma * math.sqrt(2 * math.pi)) * math.exp(-0.5 * (u / sigma) ** 2)

    mean, _ = quad(lambda u: u * density(u), 0, np.inf)
    var, _ = quad(lambda u: (u - mean) ** 2 * density(u), 0, np.inf)
    third, _ = quad(lambda u: (u - mean) ** 3 * density(u), 0, np.inf)
    m = halfnormal_moments(sigma)
    assert abs(m.mean - mean) < 1e-10
    assert abs(m.variance - var) < 1e-10
    assert abs(m.third_central - third) < 1e-10
    assert abs(HALF_NORMAL_MEAN_COEF * sigma - mean) < 1e-10
    assert abs(HALF_NORMAL_VAR_COEF * sigma**2 - var) < 1e-10
    assert abs(HALF_NORMAL_SKEW_COEF * sigma**3 - third) < 1e-10


def test_halfnormal_moments_rejects_negative_scale():
    with pytest.raises(DomainError):
        halfnormal_moments(-0.1)


@pytest.mark.parametrize(
    "sigma_v,sigma_u",
    [(1.0, 1.0), (0.3, 0.5), (0.1, 2.0), (2.0, 0.05), (0.5, 0.0)],
)
def test_composed_density_integrates_to_one(sigma_v, sigma_u):
    p = ComposedErrorParams(sigma_v=sigma_v, sigma_u=sigma_u)
    total, err = quad(
        lambda e: math.exp(composed_error_logpdf(e, p)), -np.inf, np.inf, limit=200
    )
    assert abs(total - 1.0) < 1e-8
    assert err < 1e-6


def test_composed_density_mean_matches_negative_halfnormal_mean():
    p = ComposedErrorParams(sigma_v=0.3, sigma_u=0.5)
    mean, _ = quad(
        lambda e: e * math.exp(composed_error_logpdf(e, p)), -np.inf, np.inf, limit=200
    )
    assert abs(mean - (-HALF_NORMAL_MEAN_COEF * 0.5)) < 1e-9


def test_zero_inefficiency_collapses_to_gaussian():
    p = ComposedErrorParams(sigma_v=0.4, sigma_u=0.0)
    eps = np.linspace(-3, 3, 41)
    expected = norm.logpdf(eps, scale=0.4)
    assert np.max(np.abs(composed_error_logpdf(eps, p) - expected)) < 1e-10


def test_composed_density_deep_tail_is_finite_and_accurate():
    # slant argument of +-40; the asymptotic series for log Phi(-x) is the oracle
    p = ComposedErrorParams(sigma_v=1.0, sigma_u=1.0)
    sigma = p.sigma
    eps = 40.0 * sigma / p.lam
    val = composed_error_logpdf(eps, p)
    assert math.isfinite(val)
    x = 40.0
    tail = -0.5 * x * x - 0.5 * math.log(2 * math.pi) - math.log(x) + math.log1p(
        -1.0 / x**2 + 3.0 / x**4
    )
    expected = (
        math.log(2.0)
        - 0.5 * math.log(2 * math.pi)
        - math.log(sigma)
        - 0.5 * (eps / sigma) ** 2
        + tail
    )
    assert abs(val - expected) < 1e-10 * abs(expected)
    assert math.isfinite(composed_error_logpdf(-eps, p))


def test_composed_params_validation_and_properties():
    p = ComposedErrorParams(sigma_v=0.3, sigma_u=0.4)
    assert abs(p.sigma - 0.5) < 1e-15
    assert abs(p.lam - 0.4 / 0.3) < 1e-15
    with pytest.raises(DomainError):
        ComposedErrorParams(sigma_v=0.0, sigma_u=0.4)
    with pytest.raises(DomainError):
        ComposedErrorParams(sigma_v=0.3, sigma_u=-0.1)
    with pytest.raises(DomainError):
        ComposedErrorParams(sigma_v=math.inf, sigma_u=0.1)


def test_composed_logpdf_scalar_and_array_forms():
    p = ComposedErrorParams(sigma_v=0.5, sigma_u=0.5)
    scalar = composed_error_logpdf(0.2, p)
    assert isinstance(scalar, float)
    arr = composed_error_logpdf(np.array([0.2, -0.1]), p)
    assert arr.shape == (2,)
    assert abs(arr[0] - scalar) < 1e-15
    with pytest.raises(DomainError):
        composed_error_logpdf(np.array([0.1, np.nan]), p)


def test_std_normal_wrappers_match_scipy():
    x = np.array([-5.0, -1.0, 0.0, 1.959963984540054, 8.0])
    assert np.max(np.abs(std_normal_pdf(x) - norm.pdf(x))) < 1e-14
    assert np.max(np.abs(std_normal_cdf(x) - norm.cdf(x))) < 1e-14
    assert np.max(np.abs(std_normal_logcdf(x) - norm.logcdf(x))) < 1e-12
    assert abs(std_normal_cdf(1.959963984540054) - 0.975) < 1e-12
    assert isinstance(std_normal_cdf(0.0), float)


def test_folded_normal_density_integrates_to_one():
    p = FoldedNormalCondParams(sigma_u=0.8, cross_cov=[0.3], eta_cov=[[1.5]])
    for eta in (np.array([0.0]), np.array([1.0]), np.array([-2.0])):
        total, _ = quad(lambda u: folded_normal_cond_pdf(u, eta, p), 0, np.inf, limit=200)
        assert abs(total - 1.0) < 1e-9


def test_folded_normal_matches_two_gaussian_branches():
    p = FoldedNormalCondParams(sigma_u=0.8, cross_cov=[0.3], eta_cov=[[1.5]])
    eta = np.array([1.2])
    loc = 0.3 / 1.5 * 1.2
    scale = math.sqrt(p.cond_var)
    u = 0.7
    expected = norm.pdf(u, loc=loc, scale=scale) + norm.pdf(-u, loc=loc, scale=scale)
    assert abs(folded_normal_cond_pdf(u, eta, p) - expected) < 1e-12
    assert folded_normal_cond_pdf(-0.1, eta, p) == 0.0


def test_folded_normal_validation():
    with pytest.raises(DomainError):
        FoldedNormalCondParams(sigma_u=0.5, cross_cov=[1.0], eta_cov=[[1.0]])
    with pytest.raises(DomainError):
        FoldedNormalCondParams(sigma_u=0.5, cross_cov=[0.1], eta_cov=[[-1.0]])
    with pytest.raises(DomainError):
        FoldedNormalCondParams(sigma_u=0.5, cross_cov=[0.1, 0.2], eta_cov=[[1.0]])


def test_folded_normal_cond_var_is_schur_complement():
    p = FoldedNormalCondParams(
        sigma_u=1.0,
        cross_cov=[0.3, 0.2],
        eta_cov=[[1.0, 0.2], [0.2, 2.0]],
    )
    cov = np.array([[1.0, 0.2], [0.2, 2.0]])
    cross = np.array([0.3, 0.2])
    expected = 1.0 - cross @ np.linalg.inv(cov) @ cross
    assert abs(p.cond_var - expected) < 1e-12
