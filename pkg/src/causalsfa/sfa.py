"""Cross-sectional stochastic frontier estimation.

The model is ``y = X beta + v - u`` with Gaussian noise ``v`` and half-normal
inefficiency ``u``.  Two fitting routes are provided and kept deliberately
independent so they can cross-check each other:

* corrected OLS (``fit_sfa_cols``): OLS slopes, variance components recovered
  from the second and third central moments of the residuals, intercept
  shifted up by the implied mean inefficiency;
* maximum likelihood (``fit_sfa_mle``): BFGS on the composed-error
  log-likelihood, started from the corrected-OLS estimates.

``efficiency_scores`` turns a fit into per-observation conditional mean
inefficiency by numerical integration of the posterior of ``u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset, design_matrix
from .distributions import (
    HALF_NORMAL_MEAN_COEF,
    HALF_NORMAL_SKEW_COEF,
    HALF_NORMAL_VAR_COEF,
    ComposedErrorParams,
    composed_error_logpdf_rowwise,
)
from .errors import DomainError, EvaluationError, IdentificationError
from .optimize import maximize, numeric_hessian_se
from .regression import central_moments, ols

SIGMA_V2_FLOOR = 1e-12
SIGMA_U_START_FLOOR = 1e-3


@dataclass(frozen=True)
class FrontierSpec:
    """Names the outcome and the frontier inputs.

    ``input_cols=None`` auto-detects the ``x1..xk`` columns of the dataset.
    """

    output_col: str = "y"
    input_cols: tuple[str, ...] | None = None
    intercept: bool = True

    def resolve_inputs(self, data: Dataset) -> tuple[str, ...]:
        if self.input_cols is None:
            return data.input_cols()
        return tuple(self.input_cols)

    def coef_names(self, data: Dataset) -> tuple[str, ...]:
        names = list(self.resolve_inputs(data))
        return (("const",) if self.intercept else ()) + tuple(names)


@dataclass
class SfaFit:
    """Fitted frontier: coefficients, error scales, and diagnostics.

    ``se`` (when available) lines up with ``coef_names + (sigma_v, sigma_u)``;
    entries that the method cannot deliver are NaN.
    """

    beta: np.ndarray
    params: ComposedErrorParams
    loglik: float
    n: int
    method: str
    coef_names: tuple[str, ...]
    spec: FrontierSpec
    se: np.ndarray | None = None
    flags: tuple[str, ...] = ()
    converged: bool = True

    def param_dict(self) -> dict[str, float]:
        out = {name: float(b) for name, b in zip(self.coef_names, self.beta)}
        out["sigma_v"] = self.params.sigma_v
        out["sigma_u"] = self.params.sigma_u
        return out


def sfa_loglik(data: Dataset, spec: FrontierSpec, beta, p: ComposedErrorParams) -> float:
    """Composed-error log-likelihood of the frontier at the given parameters."""
    X = design_matrix(data, spec.resolve_inputs(data), spec.intercept)
    beta = np.asarray(beta, dtype=float)
    if beta.shape[0] != X.shape[1]:
        raise DomainError(f"beta has length {beta.shape[0]}, design has {X.shape[1]} columns")
    resid = data.col(spec.output_col) - X @ beta
    # far-out trial points can push the row sum past float range; -inf is the
    # correct limit and optimizers reject it, so keep the reduction quiet
    with np.errstate(over="ignore"):
        return float(np.sum(composed_error_logpdf_rowwise(resid, p.sigma_v, p.sigma_u)))


def cols_variances_from_moments(m2: float, m3: float) -> tuple[float, float, tuple[str, ...]]:
    """Invert residual central moments into (sigma_v, sigma_u).

    A negative third moment pins ``sigma_u`` through the half-normal skew
    coefficient; a non-negative one is the wrong-skew case, which sets
    ``sigma_u = 0`` and flags the fit.  ``sigma_v^2`` is floored at a tiny
    positive value when the moment arithmetic would send it negative.
    """
    if not (math.isfinite(m2) and math.isfinite(m3)) or m2 <= 0.0:
        raise DomainError("residual moments must be finite with m2 > 0")
    flags: list[str] = []
    if m3 < 0.0:
        sigma_u = (-m3 / HALF_NORMAL_SKEW_COEF) ** (1.0 / 3.0)
    else:
        sigma_u = 0.0
        flags.append("wrong_skew")
    sigma_v2 = m2 - HALF_NORMAL_VAR_COEF * sigma_u**2
    if sigma_v2 < SIGMA_V2_FLOOR:
        sigma_v2 = SIGMA_V2_FLOOR
        flags.append("sigma_v_floored")
    return math.sqrt(sigma_v2), sigma_u, tuple(flags)


def fit_sfa_cols(data: Dataset, spec: FrontierSpec = FrontierSpec()) -> SfaFit:
    """Corrected OLS estimate of the frontier.

    OLS gives consistent slopes; the intercept absorbs the mean inefficiency
    and is corrected upward once the residual moments identify ``sigma_u``.
    """
    if data.n < 3:
        raise IdentificationError("at least 3 observations are required")
    data = data.canonical_order()
    names = spec.coef_names(data)
    X = design_matrix(data, spec.resolve_inputs(data), spec.intercept)
    y = data.col(spec.output_col)
    beta = ols(X, y, list(names))
    m2, m3 = central_moments(y - X @ beta)
    sigma_v, sigma_u, flags = cols_variances_from_moments(m2, m3)
    beta = beta.copy()
    if spec.intercept:
        beta[0] += HALF_NORMAL_MEAN_COEF * sigma_u
    params = ComposedErrorParams(sigma_v=sigma_v, sigma_u=sigma_u)
    return SfaFit(
        beta=beta,
        params=params,
        loglik=sfa_loglik(data, spec, beta, params),
        n=data.n,
        method="cols",
        coef_names=names,
        spec=spec,
        flags=flags,
    )


def fit_sfa_mle(
    data: Dataset,
    spec: FrontierSpec = FrontierSpec(),
    *,
    compute_se: bool = True,
) -> SfaFit:
    """Maximum-likelihood frontier fit, started from corrected OLS."""
    start = fit_sfa_cols(data, spec)
    data = data.canonical_order()
    X = design_matrix(data, spec.resolve_inputs(data), spec.intercept)
    y = data.col(spec.output_col)
    k = X.shape[1]

    def objective(theta: np.ndarray) -> float:
        lsv, lsu = theta[k], theta[k + 1]
        if lsv > 700.0 or lsu > 700.0:  # exp would overflow
            return -np.inf
        sv, su = math.exp(lsv), math.exp(lsu)
        if sv <= 0.0:  # exp underflowed to zero
            return -np.inf
        resid = y - X @ theta[:k]
        with np.errstate(over="ignore"):  # -inf is the correct limit
            return float(np.sum(composed_error_logpdf_rowwise(resid, sv, su)))

    flags = list(start.flags)
    su_start = start.params.sigma_u
    if su_start < SIGMA_U_START_FLOOR:
        su_start = SIGMA_U_START_FLOOR
        flags.append("wrong_skew_start")
    theta0 = np.concatenate(
        [start.beta, [math.log(start.params.sigma_v), math.log(su_start)]]
    )
    res = maximize(objective, theta0)
    if not res.converged:
        flags.append("non_converged")
    beta = res.argmax[:k]
    params = ComposedErrorParams(
        sigma_v=math.exp(res.argmax[k]), sigma_u=math.exp(res.argmax[k + 1])
    )

    se = None
    if compute_se:
        se, se_flags = _natural_se(
            lambda b, sv, su: float(
                np.sum(composed_error_logpdf_rowwise(y - X @ b, sv, su))
            ),
            beta,
            params,
        )
        flags.extend(se_flags)

    return SfaFit(
        beta=beta,
        params=params,
        loglik=res.objective_value,
        n=data.n,
        method="mle",
        coef_names=spec.coef_names(data),
        spec=spec,
        se=se,
        flags=tuple(flags),
        converged=res.converged,
    )


def _natural_se(loglik_fn, beta, params):
    """Standard errors in the natural (beta, sigma_v, sigma_u) scale."""
    k = len(beta)

    def f(theta: np.ndarray) -> float:
        sv, su = theta[k], theta[k + 1]
        if sv <= 0.0 or su <= 0.0:
            return np.nan  # outside the domain; flagged by the Hessian routine
        return loglik_fn(theta[:k], sv, su)

    point = np.concatenate([beta, [params.sigma_v, params.sigma_u]])
    try:
        result = numeric_hessian_se(f, point)
    except EvaluationError:
        return None, ("hessian_failed",)
    if not result.negative_definite:
        return None, ("hessian_not_pd",)
    return result.se, ()


@dataclass
class EfficiencyScores:
    """Per-observation conditional inefficiency and the efficiency index."""

    cond_mean_u: np.ndarray
    efficiency: np.ndarray


_QUAD_NODES, _QUAD_WEIGHTS = np.polynomial.legendre.leggauss(96)


def efficiency_scores(fit: SfaFit, data: Dataset) -> EfficiencyScores:
    """E[u | eps] per row by numerical integration, and exp(-E[u | eps]).

    The posterior of ``u`` given a residual is integrated on ``[0, B]`` with
    ``B`` generous enough (posterior mode plus ten posterior standard
    deviations) that the truncated mass is negligible.
    """
    spec = fit.spec
    X = design_matrix(data, spec.resolve_inputs(data), spec.intercept)
    resid = data.col(spec.output_col) - X @ fit.beta
    sv, su = fit.params.sigma_v, fit.params.sigma_u
    if su == 0.0:
        zeros = np.zeros(data.n)
        return EfficiencyScores(cond_mean_u=zeros, efficiency=np.ones(data.n))

    sigma2 = sv * sv + su * su
    post_sd = su * sv / math.sqrt(sigma2)
    cond = np.empty(data.n)
    for lo in range(0, data.n, 65536):
        chunk = resid[lo : lo + 65536]
        mode = np.maximum(0.0, -chunk * su * su / sigma2)
        upper = mode + 10.0 * post_sd  # covers the posterior support
        u = 0.5 * upper[:, None] * (_QUAD_NODES[None, :] + 1.0)
        logw = -0.5 * ((chunk[:, None] + u) / sv) ** 2 - 0.5 * (u / su) ** 2
        logw -= logw.max(axis=1, keepdims=True)
        w = np.exp(logw) * _QUAD_WEIGHTS[None, :]
        cond[lo : lo + 65536] = np.sum(w * u, axis=1) / np.sum(w, axis=1)
    return EfficiencyScores(cond_mean_u=cond, efficiency=np.exp(-cond))
