"""Difference-in-differences for frontier outcomes with a 2x2 design.

Group ``d`` and period ``t`` interact in both the frontier and the
inefficiency scale:

    y = beta0 + d beta1 + t beta2 + d t beta3 + v - u,
    u ~ |N(0, s(d,t)^2)|,   s(d,t) = sigma_u * exp(d gamma1 + t gamma2 + d t gamma3).

The naive double difference of cell means converges to
``beta3 - E[u]-double-difference``, so it conflates the frontier shift with
the inefficiency response.  The model is identified sequentially from the
four cells' second and third central moments, which also seed the MLE.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr
from scipy.stats import chi2

from .data import Dataset, design_matrix
from .distributions import (
    HALF_NORMAL_MEAN_COEF,
    HALF_NORMAL_SKEW_COEF,
    HALF_NORMAL_VAR_COEF,
    composed_error_logpdf_rowwise,
)
from .errors import ConvergenceError, DomainError, IdentificationError
from .optimize import maximize, numeric_hessian_se
from .regression import central_moments, ols
from .results import Decomposition
from .sfa import SIGMA_U_START_FLOOR, FrontierSpec, efficiency_scores, fit_sfa_mle

CELLS = ((0, 0), (1, 0), (0, 1), (1, 1))
_SCALE_FLOOR = 1e-3


@dataclass(frozen=True)
class DidSfaParams:
    """Frontier and inefficiency-scale parameters of the 2x2 design."""

    beta0: float
    beta1: float
    beta2: float
    beta3: float
    gamma1: float
    gamma2: float
    gamma3: float
    sigma_u: float
    sigma_v: float

    def __post_init__(self):
        for name in (
            "beta0", "beta1", "beta2", "beta3",
            "gamma1", "gamma2", "gamma3", "sigma_u", "sigma_v",
        ):
            object.__setattr__(self, name, float(getattr(self, name)))
        vals = [
            self.beta0, self.beta1, self.beta2, self.beta3,
            self.gamma1, self.gamma2, self.gamma3, self.sigma_u, self.sigma_v,
        ]
        if not all(math.isfinite(v) for v in vals):
            raise DomainError("parameters must be finite")
        if self.sigma_v <= 0.0:
            raise DomainError("sigma_v must be > 0")
        if self.sigma_u < 0.0:
            raise DomainError("sigma_u must be >= 0")

    def cell_mean_frontier(self, d: int, t: int) -> float:
        return self.beta0 + d * self.beta1 + t * self.beta2 + d * t * self.beta3

    def cell_scale(self, d: int, t: int) -> float:
        return self.sigma_u * math.exp(
            d * self.gamma1 + t * self.gamma2 + d * t * self.gamma3
        )


@dataclass(frozen=True)
class CellStat:
    n: int
    mean: float
    m2: float
    m3: float


@dataclass(frozen=True)
class CellMoments:
    """First three central moments of the outcome in each (d, t) cell."""

    cells: dict[tuple[int, int], CellStat]

    def __post_init__(self):
        missing = [c for c in CELLS if c not in self.cells]
        if missing:
            raise IdentificationError(f"missing cells: {missing}")

    @classmethod
    def from_data(cls, data: Dataset) -> "CellMoments":
        data.require("y", "d", "t")
        d = data.col("d")
        t = data.col("t")
        for name, col in (("d", d), ("t", t)):
            if not np.all((col == 0.0) | (col == 1.0)):
                raise DomainError(f"column {name!r} must be binary 0/1")
        y = data.col("y")
        cells = {}
        empty = []
        for dd, tt in CELLS:
            mask = (d == dd) & (t == tt)
            n = int(mask.sum())
            if n == 0:
                empty.append((dd, tt))
                continue
            m2, m3 = central_moments(y[mask])
            cells[(dd, tt)] = CellStat(n=n, mean=float(y[mask].mean()), m2=m2, m3=m3)
        if empty:
            raise IdentificationError(f"empty design cells: {empty}")
        return cls(cells)


def cell_moments_from_params(p: DidSfaParams, n_per_cell: int = 1) -> CellMoments:
    """Population cell moments implied by the parameters (inverse of identification)."""
    cells = {}
    for d, t in CELLS:
        s = p.cell_scale(d, t)
        cells[(d, t)] = CellStat(
            n=n_per_cell,
            mean=p.cell_mean_frontier(d, t) - HALF_NORMAL_MEAN_COEF * s,
            m2=p.sigma_v**2 + HALF_NORMAL_VAR_COEF * s**2,
            m3=-HALF_NORMAL_SKEW_COEF * s**3,
        )
    return CellMoments(cells)


@dataclass
class NaiveDid:
    """Double difference of cell means, with the OLS cross-check."""

    estimate: float
    ols_estimate: float
    cell_means: dict[tuple[int, int], float]


def naive_did(data: Dataset) -> NaiveDid:
    """The standard DiD estimate, computed two ways that must agree.

    Cell-mean double difference and the OLS interaction coefficient of the
    saturated regression are algebraically identical; a gap beyond floating
    noise indicates corrupted inputs, so it raises.
    """
    cm = CellMoments.from_data(data)
    means = {c: cm.cells[c].mean for c in CELLS}
    dd = (means[(1, 1)] - means[(1, 0)]) - (means[(0, 1)] - means[(0, 0)])
    d = data.col("d")
    t = data.col("t")
    X = np.column_stack([np.ones(data.n), d, t, d * t])
    beta = ols(X, data.col("y"), ["const", "d", "t", "d:t"])
    if abs(dd - beta[3]) > 1e-8 * max(1.0, abs(dd)):
        raise DomainError("cell-mean and OLS double differences disagree beyond tolerance")
    return NaiveDid(estimate=dd, ols_estimate=float(beta[3]), cell_means=means)


def naive_did_plim(p: DidSfaParams) -> float:
    """Population value of the naive double difference under the model."""
    bias = (
        math.exp(p.gamma1 + p.gamma2 + p.gamma3)
        - math.exp(p.gamma1)
        - math.exp(p.gamma2)
        + 1.0
    )
    return p.beta3 - HALF_NORMAL_MEAN_COEF * p.sigma_u * bias


@dataclass
class DidMomentResult:
    params: DidSfaParams
    flags: tuple[str, ...]


def identify_did_moments(cm: CellMoments) -> DidMomentResult:
    """Sequential method-of-moments identification from the four cells.

    The baseline cell's third moment pins ``sigma_u``; each remaining cell's
    third moment pins its scale and hence the gammas; means then deliver the
    betas after mean-inefficiency correction; ``sigma_v^2`` pools what the
    second moments leave over.  Wrong-skew cells (non-negative third moment)
    get a floored scale and a flag rather than an error.
    """
    flags: list[str] = []
    scales = {}
    for c in CELLS:
        m3 = cm.cells[c].m3
        if m3 < 0.0:
            scales[c] = (-m3 / HALF_NORMAL_SKEW_COEF) ** (1.0 / 3.0)
        else:
            scales[c] = 0.0
            flags.append(f"wrong_skew_cell_{c[0]}{c[1]}")

    def log_scale(c):
        return math.log(max(scales[c], _SCALE_FLOOR))

    sigma_u = scales[(0, 0)]
    gamma1 = log_scale((1, 0)) - log_scale((0, 0))
    gamma2 = log_scale((0, 1)) - log_scale((0, 0))
    gamma3 = log_scale((1, 1)) - log_scale((0, 0)) - gamma1 - gamma2
    if any(scales[c] <= 0.0 for c in CELLS):
        flags.append("gamma_floored")

    mean_u = {c: HALF_NORMAL_MEAN_COEF * scales[c] for c in CELLS}
    beta0 = cm.cells[(0, 0)].mean + mean_u[(0, 0)]
    beta1 = cm.cells[(1, 0)].mean + mean_u[(1, 0)] - beta0
    beta2 = cm.cells[(0, 1)].mean + mean_u[(0, 1)] - beta0
    beta3 = cm.cells[(1, 1)].mean + mean_u[(1, 1)] - beta0 - beta1 - beta2

    n_total = sum(cm.cells[c].n for c in CELLS)
    sigma_v2 = sum(
        cm.cells[c].n * (cm.cells[c].m2 - HALF_NORMAL_VAR_COEF * scales[c] ** 2)
        for c in CELLS
    ) / n_total
    if sigma_v2 < 1e-12:
        sigma_v2 = 1e-12
        flags.append("sigma_v_floored")

    params = DidSfaParams(
        beta0=beta0, beta1=beta1, beta2=beta2, beta3=beta3,
        gamma1=gamma1, gamma2=gamma2, gamma3=gamma3,
        sigma_u=sigma_u, sigma_v=math.sqrt(sigma_v2),
    )
    return DidMomentResult(params=params, flags=tuple(flags))


def did_sfa_loglik(data: Dataset, p: DidSfaParams) -> float:
    """Log-likelihood with the cell-specific inefficiency scales."""
    data.require("y", "d", "t")
    d = data.col("d")
    t = data.col("t")
    resid = data.col("y") - (p.beta0 + d * p.beta1 + t * p.beta2 + d * t * p.beta3)
    scale = p.sigma_u * np.exp(d * p.gamma1 + t * p.gamma2 + d * t * p.gamma3)
    # the row sum may overflow to -inf at far-out trial points; that is the
    # correct limit, so keep the reduction quiet
    with np.errstate(over="ignore"):
        return float(np.sum(composed_error_logpdf_rowwise(resid, p.sigma_v, scale)))


_FREE = ("beta0", "beta1", "beta2", "beta3", "gamma1", "gamma2", "gamma3")


@dataclass
class DidSfaFit:
    params: DidSfaParams
    decomposition: Decomposition
    loglik: float
    n: int
    moment_start: DidSfaParams
    se: np.ndarray | None = None
    se_names: tuple[str, ...] = ()
    flags: tuple[str, ...] = ()
    converged: bool = True

    def param_dict(self) -> dict[str, float]:
        p = self.params
        return {
            "beta0": p.beta0, "beta1": p.beta1, "beta2": p.beta2, "beta3": p.beta3,
            "gamma1": p.gamma1, "gamma2": p.gamma2, "gamma3": p.gamma3,
            "sigma_u": p.sigma_u, "sigma_v": p.sigma_v,
        }


def decompose_did(p: DidSfaParams) -> Decomposition:
    """Direct channel beta3 versus the mean-inefficiency double difference."""
    indirect = HALF_NORMAL_MEAN_COEF * p.sigma_u * (
        math.exp(p.gamma1 + p.gamma2 + p.gamma3)
        - math.exp(p.gamma1)
        - math.exp(p.gamma2)
        + 1.0
    )
    return Decomposition.from_channels(direct=p.beta3, indirect=indirect)


def _fit_did_constrained(
    data: Dataset,
    fixed: dict[str, float],
    compute_se: bool,
) -> DidSfaFit:
    cm = CellMoments.from_data(data)
    ident = identify_did_moments(cm)
    flags = list(ident.flags)
    start = ident.params

    d = data.col("d")
    t = data.col("t")
    y = data.col("y")
    free = [name for name in _FREE if name not in fixed]

    def assemble(theta) -> DidSfaParams:
        lsu, lsv = theta[len(free)], theta[len(free) + 1]
        if lsu > 700.0 or lsv > 700.0:
            raise DomainError("scale parameter overflow")
        values = dict(fixed)
        for name, val in zip(free, theta):
            values[name] = float(val)
        return DidSfaParams(
            sigma_u=math.exp(lsu), sigma_v=math.exp(lsv), **values
        )

    def loglik_arrays(p: DidSfaParams) -> float:
        resid = y - (p.beta0 + d * p.beta1 + t * p.beta2 + d * t * p.beta3)
        # saturating silently is fine; non-finite scales are rejected below
        with np.errstate(over="ignore", invalid="ignore"):
            scale = p.sigma_u * np.exp(d * p.gamma1 + t * p.gamma2 + d * t * p.gamma3)
        if not np.all(np.isfinite(scale)):
            return -np.inf
        with np.errstate(over="ignore"):  # -inf is the correct limit
            return float(np.sum(composed_error_logpdf_rowwise(resid, p.sigma_v, scale)))

    def objective(theta):
        try:
            p = assemble(theta)
        except DomainError:
            return -np.inf
        return loglik_arrays(p)

    start_vals = {name: getattr(start, name) for name in _FREE}
    theta0 = np.array(
        [start_vals[name] for name in free]
        + [math.log(max(start.sigma_u, SIGMA_U_START_FLOOR)), math.log(start.sigma_v)]
    )
    res = maximize(objective, theta0)
    if not res.converged:
        flags.append("non_converged")
    params = assemble(res.argmax)
    loglik = res.objective_value
    if not res.converged and loglik < loglik_arrays(start):
        # fall back to the moment-identified start rather than a worse point
        params = start
        loglik = loglik_arrays(start)
        flags.append("fallback_moment_start")

    se = None
    se_names: tuple[str, ...] = ()
    if compute_se:
        def f_nat(theta):
            if theta[len(free)] <= 0.0 or theta[len(free) + 1] <= 0.0:
                return np.nan
            values = dict(fixed)
            for name, val in zip(free, theta):
                values[name] = float(val)
            p = DidSfaParams(
                sigma_u=float(theta[len(free)]),
                sigma_v=float(theta[len(free) + 1]),
                **values,
            )
            return loglik_arrays(p)

        point = np.array(
            [getattr(params, name) for name in free] + [params.sigma_u, params.sigma_v]
        )
        try:
            se_res = numeric_hessian_se(f_nat, point)
            if se_res.negative_definite:
                se = se_res.se
                se_names = tuple(free) + ("sigma_u", "sigma_v")
            else:
                flags.append("hessian_not_pd")
        except Exception:
            flags.append("hessian_failed")

    return DidSfaFit(
        params=params,
        decomposition=decompose_did(params),
        loglik=loglik,
        n=data.n,
        moment_start=start,
        se=se,
        se_names=se_names,
        flags=tuple(flags),
        converged=res.converged,
    )


def fit_did_sfa(data: Dataset, *, compute_se: bool = True) -> DidSfaFit:
    """Maximum-likelihood fit of the 2x2 frontier model.

    Starts from the sequential moment identification; on non-convergence the
    returned fit is flagged and falls back to the moment start if that point
    scores better.
    """
    data = data.canonical_order()
    return _fit_did_constrained(data, fixed={}, compute_se=compute_se)


@dataclass
class LrTestResult:
    statistic: float
    df: int
    pvalue: float
    loglik_unrestricted: float
    loglik_restricted: float
    restriction: str


def lr_test_indirect(data: Dataset, restriction: str = "gamma3") -> LrTestResult:
    """Likelihood-ratio test that treatment leaves inefficiency unchanged.

    ``restriction="gamma3"`` tests the interaction response only (1 df);
    ``"all"`` tests gamma1 = gamma2 = gamma3 = 0 (3 df).  A restricted fit
    that beats the unrestricted one beyond numerical noise raises
    :class:`ConvergenceError` since it signals a failed optimization.
    """
    if restriction == "gamma3":
        fixed = {"gamma3": 0.0}
        df = 1
    elif restriction == "all":
        fixed = {"gamma1": 0.0, "gamma2": 0.0, "gamma3": 0.0}
        df = 3
    else:
        raise DomainError(f"unknown restriction {restriction!r}; use 'gamma3' or 'all'")
    data = data.canonical_order()
    unrestricted = _fit_did_constrained(data, fixed={}, compute_se=False)
    restricted = _fit_did_constrained(data, fixed=fixed, compute_se=False)
    stat = 2.0 * (unrestricted.loglik - restricted.loglik)
    if stat < -1e-8 * max(1.0, abs(unrestricted.loglik)):
        raise ConvergenceError(
            "restricted likelihood exceeds unrestricted; optimization failed"
        )
    stat = max(stat, 0.0)
    return LrTestResult(
        statistic=stat,
        df=df,
        pvalue=float(chi2.sf(stat, df)),
        loglik_unrestricted=unrestricted.loglik,
        loglik_restricted=restricted.loglik,
        restriction=restriction,
    )


@dataclass
class TwoStepBenchmark:
    """Outcome of the flawed fit-then-regress approach, for contrast."""

    score_did: float
    oracle_score_did: float | None
    gap: float | None


def two_step_oracle_score_did(p: DidSfaParams) -> float:
    """Population double difference of mean efficiency E[exp(-u)] across cells."""

    def mean_eff(scale: float) -> float:
        return 2.0 * math.exp(0.5 * scale**2) * float(ndtr(-scale))

    e = {c: mean_eff(p.cell_scale(*c)) for c in CELLS}
    return (e[(1, 1)] - e[(1, 0)]) - (e[(0, 1)] - e[(0, 0)])


def two_step_benchmark(data: Dataset, oracle_score_did: float | None = None) -> TwoStepBenchmark:
    """Fit a pooled frontier ignoring the design, then DiD the efficiency scores.

    This mimics the common practice of estimating efficiency first and
    regressing it on treatment afterwards.  The reported interaction
    coefficient is contaminated by frontier shifts and attenuated relative
    to the true efficiency response; callers compare it against the oracle.
    """
    data = data.canonical_order()
    CellMoments.from_data(data)  # validates the design
    pooled = fit_sfa_mle(data, FrontierSpec(output_col="y", input_cols=()), compute_se=False)
    scores = efficiency_scores(pooled, data)
    d = data.col("d")
    t = data.col("t")
    X = np.column_stack([np.ones(data.n), d, t, d * t])
    beta = ols(X, scores.efficiency, ["const", "d", "t", "d:t"])
    score_did = float(beta[3])
    gap = None if oracle_score_did is None else score_did - oracle_score_did
    return TwoStepBenchmark(score_did=score_did, oracle_score_did=oracle_score_did, gap=gap)
