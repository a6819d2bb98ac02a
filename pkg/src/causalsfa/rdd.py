"""Regression discontinuity for frontier outcomes.

Sharp designs assign treatment by a threshold on a running variable; the
local linear contrast at the cutoff estimates the jump in expected output.
With half-normal inefficiency whose scale moves at the threshold,

    y = alpha + beta1 d + beta2 (z-c) + beta3 d (z-c) + v - u,
    u = exp(rho0 + rho1 d + rho2 (z-c) + rho3 d (z-c)) * u*,   u* ~ |N(0, 1)|,

the local linear jump picks up ``beta1`` minus the jump in ``E[u]``, so the
frontier and inefficiency channels need the parametric fit to separate.  The
base inefficiency scale is carried entirely by ``exp(rho0)`` since only the
product of ``exp(rho0)`` and the scale of ``u*`` is identified.

Bandwidths come from leave-one-out cross-validation of side-by-side linear
fits over a quantile grid of distances, preferring wider windows on ties.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .distributions import (
    HALF_NORMAL_MEAN_COEF,
    ComposedErrorParams,
    composed_error_logpdf_rowwise,
)
from .errors import (
    CollinearityError,
    DomainError,
    EvaluationError,
    IdentificationError,
)
from .optimize import maximize, numeric_hessian_se
from .regression import central_moments, ols
from .results import Decomposition
from .sfa import cols_variances_from_moments

PROB_JUMP_FLOOR = 0.05
_MIN_SIDE_CV = 3
_MIN_SIDE_TOTAL = 20


@dataclass(frozen=True)
class RddSpec:
    """Threshold design description.

    ``bandwidth=None`` requests data-driven selection; a float restricts the
    sample to ``|z - cutoff| <= bandwidth``.
    """

    cutoff: float = 0.0
    bandwidth: float | None = None
    outcome_col: str = "y"
    treatment_col: str = "d"
    running_col: str = "z"

    def __post_init__(self):
        if not math.isfinite(self.cutoff):
            raise DomainError("cutoff must be finite")
        if self.bandwidth is not None and not (
            math.isfinite(self.bandwidth) and self.bandwidth > 0.0
        ):
            raise DomainError("bandwidth must be finite and > 0")


@dataclass(frozen=True)
class ScalingSpec:
    """Log-linear inefficiency scale over (treatment, running variable)."""

    rho0: float
    rho1: float = 0.0
    rho2: float = 0.0
    rho3: float = 0.0

    def __post_init__(self):
        for name in ("rho0", "rho1", "rho2", "rho3"):
            object.__setattr__(self, name, float(getattr(self, name)))
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")


def window_mask(data: Dataset, spec: RddSpec, bandwidth: float | None = None) -> np.ndarray:
    """Boolean mask of rows with |z - cutoff| inside the bandwidth."""
    h = bandwidth if bandwidth is not None else spec.bandwidth
    z = data.col(spec.running_col)
    if h is None:
        return np.ones(data.n, dtype=bool)
    return np.abs(z - spec.cutoff) <= h


def _check_sharp(d: np.ndarray, indicator: np.ndarray) -> None:
    if not np.all((d == 0.0) | (d == 1.0)):
        raise DomainError("treatment column must be binary 0/1")
    if not np.array_equal(d, indicator.astype(float)):
        raise DomainError(
            "treatment does not equal the threshold indicator; "
            "this is a fuzzy design, use frd_wald"
        )


def _interacted_jump(zc: np.ndarray, val: np.ndarray):
    """Jump in E[val | z] at 0 from the interacted local linear regression."""
    ind = (zc >= 0.0).astype(float)
    n_right = int(ind.sum())
    n_left = int(zc.size - n_right)
    if n_left < 2 or n_right < 2:
        raise IdentificationError(
            f"too few observations beside the cutoff (left {n_left}, right {n_right})"
        )
    X = np.column_stack([np.ones(zc.size), ind, zc, ind * zc])
    beta = ols(X, val, ["const", "d", "z", "d_z"])
    # side-by-side fits are an algebraically identical route to the same jump
    left = ols(np.column_stack([np.ones(n_left), zc[ind == 0.0]]), val[ind == 0.0],
               ["const", "z"])
    right = ols(np.column_stack([np.ones(n_right), zc[ind == 1.0]]), val[ind == 1.0],
                ["const", "z"])
    jump = float(beta[1])
    cross = float(right[0] - left[0])
    if abs(jump - cross) > 1e-8 * max(1.0, abs(jump)):
        raise EvaluationError("interacted and side-by-side jump estimates disagree")
    return beta, left, right, n_left, n_right


@dataclass
class SrdLocalFit:
    """Local linear jump at the threshold (total effect on the outcome)."""

    jump: float
    left_intercept: float
    left_slope: float
    right_intercept: float
    right_slope: float
    bandwidth: float | None
    n_left: int
    n_right: int


def srd_local_linear(data: Dataset, spec: RddSpec = RddSpec()) -> SrdLocalFit:
    """Sharp-design local linear estimate of the outcome jump at the cutoff."""
    data.require(spec.outcome_col, spec.treatment_col, spec.running_col)
    h = spec.bandwidth
    if h is None and _needs_bandwidth(data, spec):
        h = bandwidth_select(data, spec)
    sub = data.subset(window_mask(data, spec, h))
    zc = sub.col(spec.running_col) - spec.cutoff
    _check_sharp(sub.col(spec.treatment_col), zc >= 0.0)
    beta, left, right, n_left, n_right = _interacted_jump(zc, sub.col(spec.outcome_col))
    return SrdLocalFit(
        jump=float(beta[1]),
        left_intercept=float(left[0]),
        left_slope=float(left[1]),
        right_intercept=float(right[0]),
        right_slope=float(right[1]),
        bandwidth=h,
        n_left=n_left,
        n_right=n_right,
    )


def _needs_bandwidth(data: Dataset, spec: RddSpec) -> bool:
    # selection only makes sense when both sides are data-rich
    z = data.col(spec.running_col)
    zc = z - spec.cutoff
    return (zc < 0).sum() >= _MIN_SIDE_TOTAL and (zc >= 0).sum() >= _MIN_SIDE_TOTAL


@dataclass
class FrdFit:
    """Fuzzy-design Wald ratio: outcome jump over treatment-probability jump."""

    estimate: float
    outcome_jump: float
    prob_jump: float
    bandwidth: float | None
    n_left: int
    n_right: int


def frd_wald(data: Dataset, spec: RddSpec = RddSpec()) -> FrdFit:
    """Ratio of threshold jumps in the outcome and in treatment probability.

    Estimates the effect for threshold compliers.  A treatment-probability
    jump below 0.05 in absolute value leaves the ratio unidentified and
    raises :class:`IdentificationError` reporting both jumps.
    """
    data.require(spec.outcome_col, spec.treatment_col, spec.running_col)
    d = data.col(spec.treatment_col)
    if not np.all((d == 0.0) | (d == 1.0)):
        raise DomainError("treatment column must be binary 0/1")
    h = spec.bandwidth
    if h is None and _needs_bandwidth(data, spec):
        h = bandwidth_select(data, spec)
    sub = data.subset(window_mask(data, spec, h))
    zc = sub.col(spec.running_col) - spec.cutoff
    beta_y, *_, n_left, n_right = _interacted_jump(zc, sub.col(spec.outcome_col))
    beta_d, *_ = _interacted_jump(zc, sub.col(spec.treatment_col))
    outcome_jump = float(beta_y[1])
    prob_jump = float(beta_d[1])
    if abs(prob_jump) < PROB_JUMP_FLOOR:
        raise IdentificationError(
            f"treatment probability jump {prob_jump:.4f} is below {PROB_JUMP_FLOOR}; "
            f"outcome jump was {outcome_jump:.4f}"
        )
    return FrdFit(
        estimate=outcome_jump / prob_jump,
        outcome_jump=outcome_jump,
        prob_jump=prob_jump,
        bandwidth=h,
        n_left=n_left,
        n_right=n_right,
    )


def _side_press(zc: np.ndarray, y: np.ndarray, eval_sel: np.ndarray) -> float:
    # leave-one-out squared prediction errors of the straight-line fit,
    # summed over the evaluation rows only; leverages avoid refitting
    X = np.column_stack([np.ones(zc.size), zc])
    try:
        beta = ols(X, y, ["const", "z"])
    except CollinearityError:
        return math.inf
    resid = y - X @ beta
    XtX_inv = np.linalg.inv(X.T @ X)
    lev = np.einsum("ij,jk,ik->i", X, XtX_inv, X)
    denom = 1.0 - lev
    if np.any(denom[eval_sel] <= 1e-10):
        return math.inf
    loo = resid[eval_sel] / denom[eval_sel]
    return float(np.sum(loo**2))


def bandwidth_select(data: Dataset, spec: RddSpec = RddSpec()) -> float:
    """Leave-one-out cross-validated bandwidth over a distance-quantile grid.

    Candidates are the 10th..100th percentiles of |z - cutoff|.  For each,
    straight lines are fit on both sides of the cutoff inside the window and
    scored by leave-one-out squared errors on a fixed evaluation set: the
    points inside the narrowest feasible window.  Using a common evaluation
    set near the cutoff keeps scores comparable across window widths.
    Windows leaving fewer than three points on either side are skipped;
    ties go to the wider window.
    """
    data.require(spec.running_col, spec.outcome_col)
    zc = data.col(spec.running_col) - spec.cutoff
    y = data.col(spec.outcome_col)
    n_left_all = int((zc < 0).sum())
    n_right_all = int((zc >= 0).sum())
    if n_left_all < _MIN_SIDE_TOTAL or n_right_all < _MIN_SIDE_TOTAL:
        raise IdentificationError(
            f"bandwidth selection needs at least {_MIN_SIDE_TOTAL} observations "
            f"per side (left {n_left_all}, right {n_right_all})"
        )
    dist = np.abs(zc)
    grid = np.unique(np.quantile(dist, np.linspace(0.1, 1.0, 10)))
    feasible = []
    for h in grid:
        if h <= 0.0:
            continue
        mask = dist <= h
        if (mask & (zc < 0)).sum() >= _MIN_SIDE_CV and (mask & (zc >= 0)).sum() >= _MIN_SIDE_CV:
            feasible.append(float(h))
    if not feasible:
        raise IdentificationError("no feasible bandwidth on the candidate grid")
    eval_mask = dist <= feasible[0]
    best_h = None
    best_press = math.inf
    for h in feasible:
        window = dist <= h
        press = 0.0
        for side in (window & (zc < 0), window & (zc >= 0)):
            press += _side_press(zc[side], y[side], eval_mask[side])
        if not math.isfinite(press):
            continue
        if press <= best_press + 1e-12 * max(1.0, best_press):
            best_press = press
            best_h = h
    if best_h is None:
        raise IdentificationError("no feasible bandwidth on the candidate grid")
    return best_h


def srd_sfa_loglik(
    data: Dataset,
    spec: RddSpec,
    frontier,
    scaling: ScalingSpec,
    sigma_v: float,
) -> float:
    """Log-likelihood of the threshold frontier model on the windowed rows.

    ``frontier`` is (alpha, beta1, beta2, beta3).  Rows outside the
    bandwidth (when the spec fixes one) do not contribute.
    """
    sub = data.subset(window_mask(data, spec))
    zc = sub.col(spec.running_col) - spec.cutoff
    d = sub.col(spec.treatment_col)
    a, b1, b2, b3 = (float(v) for v in frontier)
    resid = sub.col(spec.outcome_col) - (a + b1 * d + b2 * zc + b3 * d * zc)
    log_scale = scaling.rho0 + scaling.rho1 * d + scaling.rho2 * zc + scaling.rho3 * d * zc
    if np.any(log_scale > 700.0):
        return -math.inf
    # the row sum may overflow to -inf at far-out trial points; that is the
    # correct limit, so keep the reduction quiet
    with np.errstate(over="ignore"):
        return float(
            np.sum(composed_error_logpdf_rowwise(resid, sigma_v, np.exp(log_scale)))
        )


@dataclass
class SrdSfaFit:
    """Parametric threshold fit separating frontier and inefficiency jumps."""

    frontier: np.ndarray
    frontier_names: tuple[str, ...]
    scaling: ScalingSpec
    params: ComposedErrorParams
    decomposition: Decomposition
    objective: float
    method: str
    bandwidth: float | None
    n_left: int
    n_right: int
    local_linear_jump: float
    se: np.ndarray | None = None
    se_names: tuple[str, ...] = ()
    flags: tuple[str, ...] = ()
    converged: bool = True

    def param_dict(self) -> dict[str, float]:
        out = {name: float(v) for name, v in zip(self.frontier_names, self.frontier)}
        out.update(
            rho0=self.scaling.rho0, rho1=self.scaling.rho1,
            rho2=self.scaling.rho2, rho3=self.scaling.rho3,
            sigma_v=self.params.sigma_v,
        )
        out["total"] = self.decomposition.total
        out["direct"] = self.decomposition.direct
        out["indirect"] = self.decomposition.indirect
        return out


def _decompose_srd(scaling: ScalingSpec, beta1: float) -> Decomposition:
    indirect = HALF_NORMAL_MEAN_COEF * math.exp(scaling.rho0) * (
        math.exp(scaling.rho1) - 1.0
    )
    return Decomposition.from_channels(direct=beta1, indirect=indirect)


def fit_srd_sfa(
    data: Dataset,
    spec: RddSpec = RddSpec(),
    scaling: ScalingSpec | None = None,
    method: str = "mle",
    *,
    compute_se: bool = True,
) -> SrdSfaFit:
    """Fit the sharp threshold design with an inefficiency scale jump.

    Parameters
    ----------
    data : Dataset
        Requires the spec's outcome, treatment, and running columns.
    spec : RddSpec
        Cutoff and bandwidth (``None`` selects one by cross-validation).
    scaling : ScalingSpec, optional
        Start values for the scale parameters; derived from corrected-OLS
        residual moments when omitted.
    method : str
        ``"mle"`` (default) maximizes the composed-error likelihood;
        ``"nls"`` minimizes squared deviations from the mean function, which
        identifies the same frontier when running-variable variation moves
        the scale, and backs ``sigma_v`` out of residual moments.

    Returns
    -------
    SrdSfaFit
        On non-convergence the result is flagged and keeps the local linear
        jump (``local_linear_jump``) as the trustworthy total-effect estimate.
    """
    if method not in ("mle", "nls"):
        raise DomainError(f"unknown method {method!r}; use 'mle' or 'nls'")
    data = data.canonical_order()
    h = spec.bandwidth
    if h is None and _needs_bandwidth(data, spec):
        h = bandwidth_select(data, spec)
    sub = data.subset(window_mask(data, spec, h))
    zc = sub.col(spec.running_col) - spec.cutoff
    d = sub.col(spec.treatment_col)
    y = sub.col(spec.outcome_col)
    _check_sharp(d, zc >= 0.0)
    local = _interacted_jump(zc, y)
    beta_ll, _, _, n_left, n_right = local
    flags: list[str] = []

    if scaling is None:
        resid_ll = y - np.column_stack([np.ones(sub.n), d, zc, d * zc]) @ beta_ll
        m2, m3 = central_moments(resid_ll)
        _, su_cols, cols_flags = cols_variances_from_moments(m2, m3)
        if "wrong_skew" in cols_flags:
            flags.append("wrong_skew_start")
        scaling = ScalingSpec(rho0=math.log(max(su_cols, 0.05)))

    X = np.column_stack([np.ones(sub.n), d, zc, d * zc])

    def mean_resid(theta):
        return y - X @ theta[:4]

    def log_scale_of(theta):
        return X @ theta[4:8]

    if method == "mle":
        def objective(theta):
            ls = log_scale_of(theta)
            lsv = theta[8]
            if np.any(ls > 700.0) or lsv > 700.0:
                return -np.inf
            sv = math.exp(lsv)
            if sv <= 0.0:
                return -np.inf
            with np.errstate(over="ignore"):  # -inf is the correct limit
                return float(
                    np.sum(composed_error_logpdf_rowwise(mean_resid(theta), sv, np.exp(ls)))
                )

        resid_ll = y - X @ beta_ll
        m2, _ = central_moments(resid_ll)
        sv0 = math.sqrt(max(m2 - math.exp(2 * scaling.rho0) * (1 - 2 / math.pi), 1e-4))
        theta0 = np.concatenate(
            [beta_ll, [scaling.rho0, scaling.rho1, scaling.rho2, scaling.rho3],
             [math.log(sv0)]]
        )
        res = maximize(objective, theta0)
        theta = res.argmax
        sigma_v = math.exp(theta[8])
        objective_value = res.objective_value
    else:
        def objective(theta):
            ls = log_scale_of(theta)
            if np.any(ls > 700.0):
                return -np.inf
            with np.errstate(over="ignore"):
                resid = mean_resid(theta) + HALF_NORMAL_MEAN_COEF * np.exp(ls)
                sse = float(np.sum(resid * resid))
            return -sse if math.isfinite(sse) else -np.inf

        theta0 = np.concatenate(
            [beta_ll, [scaling.rho0, scaling.rho1, scaling.rho2, scaling.rho3]]
        )
        res = maximize(objective, theta0)
        theta = res.argmax
        # scale out the noise variance from what the mean fit leaves behind
        scale_hat = np.exp(log_scale_of(theta))
        resid = mean_resid(theta) + HALF_NORMAL_MEAN_COEF * scale_hat
        sv2 = float(np.mean(resid**2)) - (1 - 2 / math.pi) * float(np.mean(scale_hat**2))
        if sv2 < 1e-12:
            sv2 = 1e-12
            flags.append("sigma_v_floored")
        sigma_v = math.sqrt(sv2)
        flags.append("nls_sigma_v_moment")
        objective_value = res.objective_value

    if not res.converged:
        flags += ["non_converged", "fallback_local_linear"]
    fitted_scaling = ScalingSpec(
        rho0=float(theta[4]), rho1=float(theta[5]), rho2=float(theta[6]), rho3=float(theta[7])
    )
    frontier = theta[:4].astype(float)

    se = None
    se_names: tuple[str, ...] = ()
    if compute_se and method == "mle":
        def f_nat(th):
            if th[8] <= 0.0:
                return np.nan
            ls = X @ th[4:8]
            if np.any(ls > 700.0):
                return np.nan
            resid = y - X @ th[:4]
            return float(
                np.sum(composed_error_logpdf_rowwise(resid, float(th[8]), np.exp(ls)))
            )

        point = np.concatenate([frontier, theta[4:8], [sigma_v]])
        try:
            se_res = numeric_hessian_se(f_nat, point)
            if se_res.negative_definite:
                se = se_res.se
                se_names = ("const", "d", "z", "d_z", "rho0", "rho1", "rho2", "rho3", "sigma_v")
            else:
                flags.append("hessian_not_pd")
        except EvaluationError:
            flags.append("hessian_failed")

    return SrdSfaFit(
        frontier=frontier,
        frontier_names=("const", "d", "z", "d_z"),
        scaling=fitted_scaling,
        params=ComposedErrorParams(sigma_v=sigma_v, sigma_u=math.exp(fitted_scaling.rho0)),
        decomposition=_decompose_srd(fitted_scaling, float(frontier[1])),
        objective=float(objective_value),
        method=method,
        bandwidth=h,
        n_left=n_left,
        n_right=n_right,
        local_linear_jump=float(beta_ll[1]),
        se=se,
        se_names=se_names,
        flags=tuple(flags),
        converged=res.converged,
    )
