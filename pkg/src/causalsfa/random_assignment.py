"""Two-group frontier model under random treatment assignment.

Treatment may shift the frontier level (direct channel, ``tau``) and rescale
the half-normal inefficiency (indirect channel, ``gamma1``):

    y_i = alpha + tau d_i + x_i' beta_{d_i} + v_i - u_i,
    u_i | d_i = j  ~  |N(0, (sigma_u0 * exp(j * gamma1))^2)|,

with noise scale ``sigma_v`` shared across groups.  The naive mean difference
estimates ``tau - E[u|d=1] + E[u|d=0]``, i.e. the total effect; the model fit
separates the two channels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, design_matrix
from .distributions import (
    HALF_NORMAL_MEAN_COEF,
    HALF_NORMAL_VAR_COEF,
    composed_error_logpdf_rowwise,
)
from .errors import DomainError, EvaluationError, IdentificationError
from .optimize import maximize, numeric_hessian_se
from .regression import central_moments, ols
from .results import Decomposition
from .sfa import SIGMA_U_START_FLOOR, cols_variances_from_moments

_GAMMA_RATIO_FLOOR = 1e-3


@dataclass(frozen=True)
class TwoGroupParams:
    """Parameters of the two-group frontier model."""

    alpha: float
    tau: float
    sigma_v: float
    sigma_u0: float
    gamma1: float
    beta0: tuple[float, ...] = field(default=())
    beta1: tuple[float, ...] = field(default=())

    def __post_init__(self):
        for name in ("alpha", "tau", "sigma_v", "sigma_u0", "gamma1"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "beta0", tuple(float(b) for b in self.beta0))
        object.__setattr__(self, "beta1", tuple(float(b) for b in self.beta1))
        vals = [self.alpha, self.tau, self.sigma_v, self.sigma_u0, self.gamma1]
        vals += list(self.beta0) + list(self.beta1)
        if not all(math.isfinite(v) for v in vals):
            raise DomainError("two-group parameters must be finite")
        if self.sigma_v <= 0.0:
            raise DomainError("sigma_v must be > 0")
        if self.sigma_u0 < 0.0:
            raise DomainError("sigma_u0 must be >= 0")
        if len(self.beta0) != len(self.beta1):
            raise DomainError("beta0 and beta1 must have the same length")

    @property
    def sigma_u1(self) -> float:
        return self.sigma_u0 * math.exp(self.gamma1)


def _split_groups(data: Dataset) -> tuple[np.ndarray, np.ndarray]:
    d = data.col("d")
    if not np.all((d == 0.0) | (d == 1.0)):
        raise DomainError("column 'd' must be binary 0/1")
    treated = d == 1.0
    if not treated.any():
        raise IdentificationError("no treated observations (d == 1)")
    if treated.all():
        raise IdentificationError("no control observations (d == 0)")
    return ~treated, treated


def two_group_loglik(data: Dataset, p: TwoGroupParams) -> float:
    """Pooled log-likelihood: control and treated contributions summed."""
    ctrl, trt = _split_groups(data)
    y = data.col("y")
    inputs = data.input_cols()
    if inputs and len(p.beta0) != len(inputs):
        raise DomainError("beta0/beta1 length does not match the input columns")
    xb = np.zeros(data.n)
    if inputs:
        X = design_matrix(data, inputs, intercept=False)
        xb[ctrl] = X[ctrl] @ np.asarray(p.beta0)
        xb[trt] = X[trt] @ np.asarray(p.beta1)
    resid = y - p.alpha - p.tau * data.col("d") - xb
    ll0 = composed_error_logpdf_rowwise(resid[ctrl], p.sigma_v, p.sigma_u0)
    ll1 = composed_error_logpdf_rowwise(resid[trt], p.sigma_v, p.sigma_u1)
    # the row sums may overflow to -inf at far-out trial points; that is the
    # correct limit, so keep the reductions quiet
    with np.errstate(over="ignore"):
        return float(np.sum(ll0) + np.sum(ll1))


def naive_mean_difference(data: Dataset) -> float:
    """Raw treated-minus-control outcome mean difference (the total effect)."""
    ctrl, trt = _split_groups(data)
    y = data.col("y")
    return float(y[trt].mean() - y[ctrl].mean())


@dataclass
class TwoGroupFit:
    params: TwoGroupParams
    decomposition: Decomposition
    loglik: float
    n0: int
    n1: int
    method: str
    se: np.ndarray | None = None
    se_names: tuple[str, ...] = ()
    flags: tuple[str, ...] = ()
    converged: bool = True

    def param_dict(self) -> dict[str, float]:
        p = self.params
        out = {
            "alpha": p.alpha,
            "tau": p.tau,
            "sigma_v": p.sigma_v,
            "sigma_u0": p.sigma_u0,
            "gamma1": p.gamma1,
        }
        for j, b in enumerate(p.beta0):
            out[f"beta0_x{j + 1}"] = b
        for j, b in enumerate(p.beta1):
            out[f"beta1_x{j + 1}"] = b
        return out


def _decompose(p: TwoGroupParams) -> Decomposition:
    indirect = HALF_NORMAL_MEAN_COEF * (p.sigma_u1 - p.sigma_u0)
    return Decomposition.from_channels(direct=p.tau, indirect=indirect)


def _cols_two_group(data: Dataset) -> tuple[TwoGroupParams, list[str]]:
    ctrl, trt = _split_groups(data)
    y = data.col("y")
    inputs = data.input_cols()
    flags: list[str] = []
    betas = []
    resids = []
    intercepts = []
    for mask in (ctrl, trt):
        sub = data.subset(mask)
        X = design_matrix(sub, inputs, intercept=True)
        names = ["const"] + list(inputs)
        b = ols(X, sub.col("y"), names)
        betas.append(b[1:])
        intercepts.append(b[0])
        resids.append(sub.col("y") - X @ b)
    m2_0, m3_0 = central_moments(resids[0])
    m2_1, m3_1 = central_moments(resids[1])
    _, su0, f0 = cols_variances_from_moments(m2_0, m3_0)
    _, su1, f1 = cols_variances_from_moments(m2_1, m3_1)
    flags += [f"control_{f}" for f in f0 if f == "wrong_skew"]
    flags += [f"treated_{f}" for f in f1 if f == "wrong_skew"]
    n0, n1 = int(ctrl.sum()), int(trt.sum())
    # noise scale is shared: pool the leftover second moments across groups
    sigma_v2 = (
        n0 * (m2_0 - HALF_NORMAL_VAR_COEF * su0**2)
        + n1 * (m2_1 - HALF_NORMAL_VAR_COEF * su1**2)
    ) / (n0 + n1)
    if sigma_v2 < 1e-12:
        sigma_v2 = 1e-12
        flags.append("sigma_v_floored")
    alpha = intercepts[0] + HALF_NORMAL_MEAN_COEF * su0
    tau = (intercepts[1] + HALF_NORMAL_MEAN_COEF * su1) - alpha
    ratio = max(su1, _GAMMA_RATIO_FLOOR) / max(su0, _GAMMA_RATIO_FLOOR)
    if su0 <= 0.0 or su1 <= 0.0:
        flags.append("gamma1_floored")
    params = TwoGroupParams(
        alpha=alpha,
        tau=tau,
        sigma_v=math.sqrt(sigma_v2),
        sigma_u0=su0,
        gamma1=math.log(ratio),
        beta0=tuple(betas[0]),
        beta1=tuple(betas[1]),
    )
    return params, flags


def fit_two_group(data: Dataset, method: str = "mle", *, compute_se: bool = True) -> TwoGroupFit:
    """Fit the two-group frontier model and decompose the treatment effect.

    Parameters
    ----------
    data : Dataset
        Requires columns ``y`` and binary ``d``; any ``x1..xk`` enter the
        frontier with group-specific slopes.
    method : str
        ``"mle"`` (default) or ``"cols"`` for the moment-based route.
    compute_se : bool
        Numeric-Hessian standard errors for the MLE route.

    Returns
    -------
    TwoGroupFit
        Parameters, the direct/indirect decomposition, and diagnostics.
    """
    if method not in ("mle", "cols"):
        raise DomainError(f"unknown method {method!r}; use 'mle' or 'cols'")
    data = data.canonical_order()
    ctrl, trt = _split_groups(data)
    n0, n1 = int(ctrl.sum()), int(trt.sum())
    start, flags = _cols_two_group(data)

    if method == "cols":
        return TwoGroupFit(
            params=start,
            decomposition=_decompose(start),
            loglik=two_group_loglik(data, start),
            n0=n0,
            n1=n1,
            method="cols",
            flags=tuple(flags),
        )

    inputs = data.input_cols()
    k = len(inputs)
    y = data.col("y")
    d = data.col("d")
    X = design_matrix(data, inputs, intercept=False) if inputs else None

    def unpack(theta):
        beta0 = tuple(theta[5 : 5 + k])
        beta1 = tuple(theta[5 + k : 5 + 2 * k])
        return theta[0], theta[1], theta[2], theta[3], theta[4], beta0, beta1

    def loglik_at(alpha, tau, sv, su0, gamma1, beta0, beta1):
        xb = np.zeros(data.n)
        if k:
            xb[ctrl] = X[ctrl] @ np.asarray(beta0)
            xb[trt] = X[trt] @ np.asarray(beta1)
        resid = y - alpha - tau * d - xb
        su1 = su0 * math.exp(gamma1)
        if not math.isfinite(su1):
            return -np.inf
        ll0 = composed_error_logpdf_rowwise(resid[ctrl], sv, su0)
        ll1 = composed_error_logpdf_rowwise(resid[trt], sv, su1)
        with np.errstate(over="ignore"):  # -inf is the correct limit
            return float(np.sum(ll0) + np.sum(ll1))

    def objective(theta):
        alpha, tau, lsv, lsu0, gamma1, beta0, beta1 = unpack(theta)
        if lsv > 700.0 or lsu0 > 700.0:
            return -np.inf
        sv, su0 = math.exp(lsv), math.exp(lsu0)
        if sv <= 0.0:
            return -np.inf
        return loglik_at(alpha, tau, sv, su0, gamma1, beta0, beta1)

    su0_start = max(start.sigma_u0, SIGMA_U_START_FLOOR)
    theta0 = np.concatenate(
        [
            [start.alpha, start.tau, math.log(start.sigma_v), math.log(su0_start), start.gamma1],
            start.beta0,
            start.beta1,
        ]
    )
    res = maximize(objective, theta0)
    if not res.converged:
        flags.append("non_converged")
    alpha, tau, lsv, lsu0, gamma1, beta0, beta1 = unpack(res.argmax)
    params = TwoGroupParams(
        alpha=alpha,
        tau=tau,
        sigma_v=math.exp(lsv),
        sigma_u0=math.exp(lsu0),
        gamma1=gamma1,
        beta0=beta0,
        beta1=beta1,
    )

    se = None
    se_names: tuple[str, ...] = ()
    if compute_se:
        def f_nat(theta):
            if theta[2] <= 0.0 or theta[3] <= 0.0:
                return np.nan
            a, t_, sv, su0, g1 = theta[:5]
            b0 = tuple(theta[5 : 5 + k])
            b1 = tuple(theta[5 + k : 5 + 2 * k])
            return loglik_at(a, t_, sv, su0, g1, b0, b1)

        point = np.concatenate(
            [[params.alpha, params.tau, params.sigma_v, params.sigma_u0, params.gamma1],
             params.beta0, params.beta1]
        )
        try:
            se_res = numeric_hessian_se(f_nat, point)
        except EvaluationError:
            se_res = None
            flags.append("hessian_failed")
        if se_res is not None:
            if se_res.negative_definite:
                se = se_res.se
                se_names = (
                    ("alpha", "tau", "sigma_v", "sigma_u0", "gamma1")
                    + tuple(f"beta0_{c}" for c in inputs)
                    + tuple(f"beta1_{c}" for c in inputs)
                )
            else:
                flags.append("hessian_not_pd")

    return TwoGroupFit(
        params=params,
        decomposition=_decompose(params),
        loglik=res.objective_value,
        n0=n0,
        n1=n1,
        method="mle",
        se=se,
        se_names=se_names,
        flags=tuple(flags),
        converged=res.converged,
    )
