"""Two-group frontier model under random assignment."""

import math

import numpy as np
import pytest

from causalsfa.data import Dataset
from causalsfa.distributions import (
    HALF_NORMAL_MEAN_COEF,
    ComposedErrorParams,
    composed_error_logpdf,
)
from causalsfa.errors import DomainError, IdentificationError
from causalsfa.random_assignment import (
    TwoGroupParams,
    fit_two_group,
    naive_mean_difference,
    two_group_loglik,
)
from causalsfa.simulate import SimDesign, generate

_TRUTH = dict(alpha=1.0, tau=0.4, sigma_v=0.3, sigma_u0=0.5, gamma1=0.6, p_treat=0.5)


def _draw(seed, n):
    return generate(SimDesign("two_group", seed=seed, params=dict(_TRUTH, n=n)))


def _draw_with_inputs(seed, n):
    """Two groups plus one frontier input with group-specific slopes."""
    rng = np.random.default_rng(seed)
    d = (rng.random(n) < 0.5).astype(float)
    x1 = rng.standard_normal(n)
    slope = np.where(d == 1.0, 0.5, 0.8)
    su = 0.5 * np.exp(0.6 * d)
    y = 1.0 + 0.4 * d + slope * x1 + 0.3 * rng.standard_normal(n)
    y -= su * np.abs(rng.standard_normal(n))
    return Dataset({"y": y, "d": d, "x1": x1})


def test_params_validation_and_sigma_u1():
    p = TwoGroupParams(alpha=1.0, tau=0.2, sigma_v=0.3, sigma_u0=0.5, gamma1=0.7)
    assert abs(p.sigma_u1 - 0.5 * math.exp(0.7)) < 1e-15
    with pytest.raises(DomainError):
        TwoGroupParams(alpha=1.0, tau=0.2, sigma_v=0.0, sigma_u0=0.5, gamma1=0.0)
    with pytest.raises(DomainError):
        TwoGroupParams(alpha=1.0, tau=0.2, sigma_v=0.3, sigma_u0=-0.1, gamma1=0.0)
    with pytest.raises(DomainError):
        TwoGroupParams(
            alpha=1.0, tau=0.2, sigma_v=0.3, sigma_u0=0.5, gamma1=0.0, beta0=(1.0,)
        )


def test_split_validation():
    ones = Dataset({"y": np.zeros(4), "d": np.ones(4)})
    with pytest.raises(IdentificationError, match="control"):
        naive_mean_difference(ones)
    zeros = Dataset({"y": np.zeros(4), "d": np.zeros(4)})
    with pytest.raises(IdentificationError, match="treated"):
        naive_mean_difference(zeros)
    frac = Dataset({"y": np.zeros(4), "d": np.array([0.0, 0.5, 1.0, 1.0])})
    with pytest.raises(DomainError, match="binary"):
        naive_mean_difference(frac)


def test_naive_difference_is_group_mean_gap():
    y = np.array([1.0, 3.0, 10.0, 14.0])
    d = np.array([0.0, 0.0, 1.0, 1.0])
    data = Dataset({"y": y, "d": d})
    assert naive_mean_difference(data) == 12.0 - 2.0


def test_loglik_is_sum_of_groupwise_composed_logliks():
    data = _draw_with_inputs(5, 200)
    p = TwoGroupParams(
        alpha=0.9, tau=0.3, sigma_v=0.35, sigma_u0=0.4, gamma1=0.5,
        beta0=(0.7,), beta1=(0.6,),
    )
    d = data.col("d")
    resid = data.col("y") - p.alpha - p.tau * d
    resid = resid - np.where(d == 1.0, p.beta1[0], p.beta0[0]) * data.col("x1")
    manual = 0.0
    for i in range(data.n):
        su = p.sigma_u1 if d[i] == 1.0 else p.sigma_u0
        manual += composed_error_logpdf(
            resid[i], ComposedErrorParams(sigma_v=p.sigma_v, sigma_u=su)
        )
    assert abs(two_group_loglik(data, p) - manual) < 1e-8 * abs(manual)


def test_loglik_rejects_wrong_beta_length():
    data = _draw_with_inputs(5, 50)
    p = TwoGroupParams(alpha=1.0, tau=0.4, sigma_v=0.3, sigma_u0=0.5, gamma1=0.6)
    with pytest.raises(DomainError, match="length"):
        two_group_loglik(data, p)


def test_mle_recovers_truth():
    data = _draw(6, 12000)
    fit = fit_two_group(data, method="mle", compute_se=False)
    assert fit.converged
    p = fit.params
    assert abs(p.alpha - 1.0) < 0.05
    assert abs(p.tau - 0.4) < 0.07
    assert abs(p.sigma_v - 0.3) < 0.03
    assert abs(p.sigma_u0 - 0.5) < 0.05
    assert abs(p.gamma1 - 0.6) < 0.12
    assert fit.n0 + fit.n1 == data.n


def test_mle_recovers_truth_with_inputs():
    data = _draw_with_inputs(61, 12000)
    fit = fit_two_group(data, method="mle", compute_se=False)
    p = fit.params
    assert abs(p.tau - 0.4) < 0.08
    assert abs(p.beta0[0] - 0.8) < 0.02
    assert abs(p.beta1[0] - 0.5) < 0.02
    assert abs(p.gamma1 - 0.6) < 0.12


def test_cols_recovers_truth():
    data = _draw(7, 60000)
    fit = fit_two_group(data, method="cols", compute_se=False)
    p = fit.params
    assert abs(p.tau - 0.4) < 0.1
    assert abs(p.sigma_u0 - 0.5) < 0.05
    assert abs(p.gamma1 - 0.6) < 0.15


def test_decomposition_matches_channel_formula():
    data = _draw(8, 4000)
    fit = fit_two_group(data, method="mle", compute_se=False)
    p = fit.params
    indirect = HALF_NORMAL_MEAN_COEF * (p.sigma_u1 - p.sigma_u0)
    assert abs(fit.decomposition.indirect - indirect) < 1e-12
    assert abs(fit.decomposition.direct - p.tau) < 1e-12
    assert abs(fit.decomposition.total - (p.tau - indirect)) < 1e-12


def test_pooled_sigma_v_between_groupwise_fits():
    data = _draw(9, 8000)
    fit = fit_two_group(data, method="cols", compute_se=False)
    from causalsfa.sfa import FrontierSpec, fit_sfa_cols

    d = data.col("d")
    spec = FrontierSpec(input_cols=())
    lo, hi = sorted(
        fit_sfa_cols(data.subset(d == g), spec).params.sigma_v for g in (0.0, 1.0)
    )
    assert lo - 1e-9 <= fit.params.sigma_v <= hi + 1e-9


def test_fit_is_permutation_invariant_bitwise():
    data = _draw_with_inputs(10, 600)
    perm = np.random.default_rng(1).permutation(600)
    shuffled = Dataset({name: data.col(name)[perm] for name in data.names})
    for method in ("cols", "mle"):
        a = fit_two_group(data, method=method, compute_se=False)
        b = fit_two_group(shuffled, method=method, compute_se=False)
        assert a.params == b.params
        assert a.loglik == b.loglik


def test_mle_reports_standard_errors():
    data = _draw(11, 3000)
    fit = fit_two_group(data, method="mle")
    assert fit.se is not None
    assert len(fit.se) == len(fit.se_names)
    assert set(fit.se_names) >= {"alpha", "tau", "sigma_v", "sigma_u0", "gamma1"}
    assert np.all(np.asarray(fit.se) > 0)


def test_param_dict_keys_with_inputs():
    fit = fit_two_group(_draw_with_inputs(12, 500), method="cols", compute_se=False)
    assert set(fit.param_dict()) == {
        "alpha", "tau", "sigma_v", "sigma_u0", "gamma1", "beta0_x1", "beta1_x1",
    }


def test_unknown_method_rejected():
    data = _draw(12, 200)
    with pytest.raises(DomainError, match="method"):
        fit_two_group(data, method="gls")
