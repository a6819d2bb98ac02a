"""Endogeneity-corrected stochastic frontier estimation.

When a frontier input is chosen with knowledge of the producer's own noise
draw, the input is correlated with the composed error and both OLS and the
plain frontier likelihood are inconsistent.  Three corrections are provided,
all requiring instruments (columns ``w1..wm`` by convention):

* :func:`c2sls_fit`: two-stage least squares for the slopes, then the
  corrected-OLS moment inversion on the structural residuals and the usual
  intercept shift;
* :func:`fit_aps_mle`: joint maximum likelihood of the frontier equation and
  the linear first stage, with the Gaussian noise conditioned on the
  first-stage errors;
* :func:`gmm_fit`: two-step method of moments on the composed-error score
  functions, instrumenting the frontier regressors.

The maintained model is ``y = X beta + v - u`` with half-normal ``u``
independent of everything, and first stage ``X2 = W Gamma + Z Delta + eta``
(``Z`` collects the intercept and exogenous inputs) where ``(v, eta)`` is
jointly Gaussian.  Correlation between ``v`` and ``eta`` is what makes ``X2``
endogenous.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import log_ndtr

from .data import Dataset, design_matrix
from .distributions import (
    HALF_NORMAL_MEAN_COEF,
    ComposedErrorParams,
    composed_error_logpdf_rowwise,
)
from .errors import DomainError, EvaluationError, IdentificationError
from .optimize import maximize, numeric_hessian_se
from .regression import central_moments, ols
from .sfa import SIGMA_U_START_FLOOR, cols_variances_from_moments

_LOG_2PI = math.log(2.0 * math.pi)
WEAK_R2_FLOOR = 0.01


@dataclass(frozen=True)
class EndoSpec:
    """Names the outcome, the endogenous inputs, and the instruments.

    ``exogenous_cols`` are frontier inputs treated as their own instruments.
    At least as many instruments as endogenous inputs are required.  An
    endogenous column may appear among the instruments; that degenerate
    choice reproduces the uninstrumented estimators and is useful for
    cross-checks.
    """

    endogenous_cols: tuple[str, ...]
    instrument_cols: tuple[str, ...]
    exogenous_cols: tuple[str, ...] = ()
    output_col: str = "y"

    def __post_init__(self):
        object.__setattr__(self, "endogenous_cols", tuple(self.endogenous_cols))
        object.__setattr__(self, "instrument_cols", tuple(self.instrument_cols))
        object.__setattr__(self, "exogenous_cols", tuple(self.exogenous_cols))
        if not self.endogenous_cols:
            raise DomainError("at least one endogenous column is required")
        if not self.instrument_cols:
            raise DomainError("at least one instrument column is required")
        for group in (self.endogenous_cols, self.instrument_cols, self.exogenous_cols):
            if len(set(group)) != len(group):
                raise DomainError("duplicate column names in the specification")
        if set(self.endogenous_cols) & set(self.exogenous_cols):
            raise DomainError("a column cannot be both endogenous and exogenous")
        regressors = self.endogenous_cols + self.exogenous_cols + self.instrument_cols
        if self.output_col in regressors:
            raise DomainError("the outcome column cannot appear on the right-hand side")
        if len(self.instrument_cols) < len(self.endogenous_cols):
            raise IdentificationError(
                f"{len(self.endogenous_cols)} endogenous columns need at least as many "
                f"instruments, got {len(self.instrument_cols)}"
            )

    def coef_names(self) -> tuple[str, ...]:
        return ("const",) + self.exogenous_cols + self.endogenous_cols


def _blocks(data: Dataset, spec: EndoSpec):
    """Outcome vector and the X1 / X2 / W column blocks, in spec order."""
    data.require(
        spec.output_col, *spec.exogenous_cols, *spec.endogenous_cols, *spec.instrument_cols
    )
    y = data.col(spec.output_col)
    x1 = design_matrix(data, spec.exogenous_cols, intercept=False)
    x2 = design_matrix(data, spec.endogenous_cols, intercept=False)
    w = design_matrix(data, spec.instrument_cols, intercept=False)
    return y, x1, x2, w


@dataclass
class C2slsFit:
    """Two-stage least squares frontier fit with moment-based error scales.

    ``se`` lines up with ``coef_names + (sigma_v, sigma_u)``; only the slope
    entries are available from the 2SLS formula, the rest are NaN.
    """

    beta: np.ndarray
    params: ComposedErrorParams
    loglik: float
    n: int
    coef_names: tuple[str, ...]
    first_stage_r2: tuple[float, ...]
    se: np.ndarray | None = None
    flags: tuple[str, ...] = ()

    def param_dict(self) -> dict[str, float]:
        out = {name: float(b) for name, b in zip(self.coef_names, self.beta)}
        out["sigma_v"] = self.params.sigma_v
        out["sigma_u"] = self.params.sigma_u
        return out


def c2sls_fit(data: Dataset, spec: EndoSpec) -> C2slsFit:
    """Corrected two-stage least squares.

    Each endogenous column is projected on the intercept, the exogenous
    inputs, and the instruments; the outcome is then regressed on the
    projections.  Slopes are consistent under endogeneity, so the residuals
    against the *actual* inputs recover the composed error, whose second and
    third central moments identify the error scales exactly as in the
    corrected-OLS frontier fit.  A first-stage R-squared below 1 percent
    raises the ``weak_instruments`` flag.
    """
    if data.n < 3:
        raise IdentificationError("at least 3 observations are required")
    data = data.canonical_order()
    y, x1, x2, w = _blocks(data, spec)
    n = data.n
    names = spec.coef_names()
    flags: list[str] = []

    fs_design = np.column_stack([np.ones(n), x1, w])
    fs_names = ["const", *spec.exogenous_cols, *spec.instrument_cols]
    fitted = np.empty_like(x2)
    r2 = []
    for j in range(x2.shape[1]):
        coefs = ols(fs_design, x2[:, j], fs_names)
        fitted[:, j] = fs_design @ coefs
        ss_tot = float(np.sum((x2[:, j] - x2[:, j].mean()) ** 2))
        ss_res = float(np.sum((x2[:, j] - fitted[:, j]) ** 2))
        r2.append(1.0 - ss_res / ss_tot if ss_tot > 0.0 else 0.0)
    if min(r2) < WEAK_R2_FLOOR:
        flags.append("weak_instruments")

    x_hat = np.column_stack([np.ones(n), x1, fitted])
    beta = ols(x_hat, y, list(names))

    x_act = np.column_stack([np.ones(n), x1, x2])
    m2, m3 = central_moments(y - x_act @ beta)
    sigma_v, sigma_u, mflags = cols_variances_from_moments(m2, m3)
    flags.extend(mflags)
    beta = beta.copy()
    beta[0] += HALF_NORMAL_MEAN_COEF * sigma_u
    params = ComposedErrorParams(sigma_v=sigma_v, sigma_u=sigma_u)

    # classical 2SLS covariance for the slopes; the corrected intercept and
    # the moment-based scales have no closed-form errors here
    se = np.full(len(names) + 2, np.nan)
    cov = m2 * np.linalg.inv(x_hat.T @ x_hat)
    se[1 : len(names)] = np.sqrt(np.diag(cov)[1:])

    eps = y - x_act @ beta
    return C2slsFit(
        beta=beta,
        params=params,
        loglik=float(np.sum(composed_error_logpdf_rowwise(eps, sigma_v, sigma_u))),
        n=n,
        coef_names=names,
        first_stage_r2=tuple(float(v) for v in r2),
        se=se,
        flags=tuple(flags),
    )


@dataclass(frozen=True)
class ApsParams:
    """Joint parameters of the frontier and the linear first stage.

    ``gamma`` has one row per instrument, ``delta`` one row per first-stage
    intercept/exogenous regressor, both with one column per endogenous input.
    ``cov_v_eta`` and ``cov_eta`` are the noise/first-stage covariance blocks;
    the implied conditional noise variance must be positive.
    """

    beta: np.ndarray
    sigma_v: float
    sigma_u: float
    gamma: np.ndarray
    delta: np.ndarray
    cov_v_eta: np.ndarray
    cov_eta: np.ndarray
    _chol: np.ndarray = field(init=False, repr=False, compare=False)
    _mu_coef: np.ndarray = field(init=False, repr=False, compare=False)
    _sigma_c: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        gamma = np.atleast_2d(np.asarray(self.gamma, dtype=float))
        delta = np.atleast_2d(np.asarray(self.delta, dtype=float))
        sve = np.atleast_1d(np.asarray(self.cov_v_eta, dtype=float))
        cee = np.atleast_2d(np.asarray(self.cov_eta, dtype=float))
        object.__setattr__(self, "sigma_v", float(self.sigma_v))
        object.__setattr__(self, "sigma_u", float(self.sigma_u))
        for arr in (beta, gamma, delta, sve, cee):
            if not np.all(np.isfinite(arr)):
                raise DomainError("parameters must be finite")
        if not (math.isfinite(self.sigma_v) and self.sigma_v > 0.0):
            raise DomainError("sigma_v must be finite and > 0")
        if not (math.isfinite(self.sigma_u) and self.sigma_u >= 0.0):
            raise DomainError("sigma_u must be finite and >= 0")
        k2 = gamma.shape[1]
        if delta.shape[1] != k2 or sve.shape != (k2,) or cee.shape != (k2, k2):
            raise DomainError("first-stage parameter shapes disagree")
        if not np.allclose(cee, cee.T):
            raise DomainError("cov_eta must be symmetric")
        try:
            chol = np.linalg.cholesky(cee)
        except np.linalg.LinAlgError:
            raise DomainError("cov_eta must be positive definite") from None
        mu_coef = solve_triangular(chol.T, solve_triangular(chol, sve, lower=True), lower=False)
        sigma_c2 = self.sigma_v**2 - float(sve @ mu_coef)
        if sigma_c2 <= 0.0:
            raise DomainError("conditional noise variance is not positive")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "cov_v_eta", sve)
        object.__setattr__(self, "cov_eta", cee)
        object.__setattr__(self, "_chol", chol)
        object.__setattr__(self, "_mu_coef", mu_coef)
        object.__setattr__(self, "_sigma_c", math.sqrt(sigma_c2))

    @property
    def sigma_c(self) -> float:
        """Conditional noise scale given the first-stage errors."""
        return self._sigma_c


def _aps_loglik_arrays(y, x_full, x2, w, z1, beta, sigma_u, gamma, delta, sve, chol, sigma_c):
    """Joint log-likelihood from raw arrays and a Cholesky factor of cov_eta."""
    n, k2 = x2.shape
    eta = x2 - w @ gamma - z1 @ delta
    mu_coef = solve_triangular(chol.T, solve_triangular(chol, sve, lower=True), lower=False)
    eps_c = y - x_full @ beta - eta @ mu_coef
    # the row sums may overflow at far-out trial points; the resulting -inf
    # (or inf quadratic term) is the correct limit, so keep them quiet
    with np.errstate(over="ignore"):
        ll1 = float(np.sum(composed_error_logpdf_rowwise(eps_c, sigma_c, sigma_u)))
        white = solve_triangular(chol, eta.T, lower=True)
        log_diag = float(np.sum(np.log(np.diag(chol))))
        ll2 = -0.5 * n * k2 * _LOG_2PI - n * log_diag - 0.5 * float(np.sum(white * white))
        return ll1 + ll2


def aps_loglik(data: Dataset, spec: EndoSpec, params: ApsParams) -> float:
    """Joint log-likelihood of the outcome and the endogenous inputs.

    The outcome contributes a composed-error term with the noise scale
    reduced to its conditional value given the first-stage errors and the
    frontier shifted by the conditional noise mean; the first-stage errors
    contribute a Gaussian term.
    """
    y, x1, x2, w = _blocks(data, spec)
    k1, k2, ell = x1.shape[1], x2.shape[1], w.shape[1]
    if params.beta.shape[0] != 1 + k1 + k2:
        raise DomainError("beta length does not match the specification")
    if params.gamma.shape != (ell, k2) or params.delta.shape != (1 + k1, k2):
        raise DomainError("first-stage parameter shapes do not match the specification")
    z1 = np.column_stack([np.ones(data.n), x1])
    x_full = np.column_stack([z1, x2])
    return _aps_loglik_arrays(
        y, x_full, x2, w, z1,
        params.beta, params.sigma_u, params.gamma, params.delta,
        params.cov_v_eta, params._chol, params.sigma_c,
    )


@dataclass
class ApsFit:
    """Joint maximum-likelihood fit of the frontier and its first stage."""

    params: ApsParams
    loglik: float
    n: int
    coef_names: tuple[str, ...]
    se: np.ndarray | None = None
    se_names: tuple[str, ...] = ()
    flags: tuple[str, ...] = ()
    converged: bool = True

    def param_dict(self) -> dict[str, float]:
        out = {name: float(b) for name, b in zip(self.coef_names, self.params.beta)}
        out["sigma_v"] = self.params.sigma_v
        out["sigma_u"] = self.params.sigma_u
        for name, val in zip(self.se_names[len(out) :], _first_stage_flat(self.params)):
            out[name] = float(val)
        return out


def _first_stage_names(spec: EndoSpec) -> tuple[str, ...]:
    z_names = ("const",) + spec.exogenous_cols
    names = []
    for ic in spec.instrument_cols:
        for ec in spec.endogenous_cols:
            names.append(f"gamma_{ic}_{ec}")
    for zn in z_names:
        for ec in spec.endogenous_cols:
            names.append(f"delta_{zn}_{ec}")
    for ec in spec.endogenous_cols:
        names.append(f"cov_v_eta_{ec}")
    endo = spec.endogenous_cols
    for a in range(len(endo)):
        for b in range(a + 1):
            names.append(f"cov_eta_{endo[a]}_{endo[b]}")
    return tuple(names)


def _first_stage_flat(params: ApsParams) -> np.ndarray:
    k2 = params.gamma.shape[1]
    tril = [params.cov_eta[a, b] for a in range(k2) for b in range(a + 1)]
    return np.concatenate(
        [params.gamma.ravel(), params.delta.ravel(), params.cov_v_eta, tril]
    )


def fit_aps_mle(data: Dataset, spec: EndoSpec, *, compute_se: bool = True) -> ApsFit:
    """Joint maximum likelihood for the frontier and the first stage.

    Started from the two-stage least squares estimate, with first-stage
    coefficients from per-column OLS and covariance blocks from the sample
    moments of the residuals.  The noise/first-stage covariance is shrunk at
    the start if the implied conditional noise variance is too small.
    """
    data = data.canonical_order()
    y, x1, x2, w = _blocks(data, spec)
    n = data.n
    k1, k2, ell = x1.shape[1], x2.shape[1], w.shape[1]
    k = 1 + k1 + k2
    m = 1 + k1
    z1 = np.column_stack([np.ones(n), x1])
    x_full = np.column_stack([z1, x2])
    names = spec.coef_names()

    start = c2sls_fit(data, spec)
    flags = [f for f in start.flags if f == "weak_instruments"]

    fs_design = np.column_stack([z1, w])
    fs_names = ["const", *spec.exogenous_cols, *spec.instrument_cols]
    delta0 = np.empty((m, k2))
    gamma0 = np.empty((ell, k2))
    eta_hat = np.empty((n, k2))
    for j in range(k2):
        coefs = ols(fs_design, x2[:, j], fs_names)
        delta0[:, j] = coefs[:m]
        gamma0[:, j] = coefs[m:]
        eta_hat[:, j] = x2[:, j] - fs_design @ coefs
    cee0 = eta_hat.T @ eta_hat / n
    eps_hat = y - x_full @ start.beta
    sve0 = (eta_hat * (eps_hat - eps_hat.mean())[:, None]).mean(axis=0)

    sv0 = start.params.sigma_v
    su0 = start.params.sigma_u
    if su0 < SIGMA_U_START_FLOOR:
        su0 = SIGMA_U_START_FLOOR
        flags.append("wrong_skew_start")
    chol0 = np.linalg.cholesky(cee0)
    half = solve_triangular(chol0, sve0, lower=True)
    quad = float(half @ half)
    if quad >= 0.9 * sv0**2:
        # keep the starting conditional variance at 10 percent of the noise
        sve0 = sve0 * math.sqrt(0.9 * sv0**2 / quad)

    tril_idx = [(a, b) for a in range(k2) for b in range(a + 1)]
    chol_entries0 = np.array(
        [math.log(chol0[a, a]) if a == b else chol0[a, b] for a, b in tril_idx]
    )
    theta0 = np.concatenate(
        [
            start.beta,
            [math.log(sv0), math.log(su0)],
            gamma0.ravel(),
            delta0.ravel(),
            sve0,
            chol_entries0,
        ]
    )

    sl_g = slice(k + 2, k + 2 + ell * k2)
    sl_d = slice(sl_g.stop, sl_g.stop + m * k2)
    sl_s = slice(sl_d.stop, sl_d.stop + k2)
    sl_c = slice(sl_s.stop, sl_s.stop + len(tril_idx))

    def unpack(theta):
        chol = np.zeros((k2, k2))
        for entry, (a, b) in zip(theta[sl_c], tril_idx):
            chol[a, b] = math.exp(entry) if a == b else entry
        return (
            theta[:k],
            theta[k],
            theta[k + 1],
            theta[sl_g].reshape(ell, k2),
            theta[sl_d].reshape(m, k2),
            theta[sl_s],
            chol,
        )

    def objective(theta):
        if theta[k] > 700.0 or theta[k + 1] > 700.0 or np.max(theta[sl_c]) > 350.0:
            return -np.inf
        beta, lsv, lsu, gamma, delta, sve, chol = unpack(theta)
        sv, su = math.exp(lsv), math.exp(lsu)
        if sv <= 0.0:
            return -np.inf
        with np.errstate(over="ignore", invalid="ignore"):
            half = solve_triangular(chol, sve, lower=True)
            sigma_c2 = sv * sv - float(half @ half)
        if not math.isfinite(sigma_c2) or sigma_c2 <= 0.0:
            return -np.inf
        try:
            val = _aps_loglik_arrays(
                y, x_full, x2, w, z1, beta, su, gamma, delta, sve, chol, math.sqrt(sigma_c2)
            )
        except DomainError:
            return -np.inf
        return val if math.isfinite(val) else -np.inf

    res = maximize(objective, theta0)
    if not res.converged:
        flags.append("non_converged")
    beta, lsv, lsu, gamma, delta, sve, chol = unpack(res.argmax)
    params = ApsParams(
        beta=beta,
        sigma_v=math.exp(lsv),
        sigma_u=math.exp(lsu),
        gamma=gamma,
        delta=delta,
        cov_v_eta=sve,
        cov_eta=chol @ chol.T,
    )

    se = None
    se_names = tuple(
        [*names, "sigma_v", "sigma_u", *_first_stage_names(spec)]
    )
    if compute_se:
        se, se_flags = _aps_natural_se(
            y, x_full, x2, w, z1, params, k, ell, m, k2, tril_idx
        )
        flags.extend(se_flags)

    return ApsFit(
        params=params,
        loglik=res.objective_value,
        n=n,
        coef_names=names,
        se=se,
        se_names=se_names,
        flags=tuple(flags),
        converged=res.converged,
    )


def _aps_natural_se(y, x_full, x2, w, z1, params, k, ell, m, k2, tril_idx):
    """Standard errors on the natural parameter scale via the numeric Hessian."""

    def f(theta):
        beta = theta[:k]
        sv, su = theta[k], theta[k + 1]
        pos = k + 2
        gamma = theta[pos : pos + ell * k2].reshape(ell, k2)
        pos += ell * k2
        delta = theta[pos : pos + m * k2].reshape(m, k2)
        pos += m * k2
        sve = theta[pos : pos + k2]
        pos += k2
        cee = np.zeros((k2, k2))
        for entry, (a, b) in zip(theta[pos:], tril_idx):
            cee[a, b] = entry
            cee[b, a] = entry
        if sv <= 0.0 or su < 0.0:
            return np.nan
        try:
            chol = np.linalg.cholesky(cee)
        except np.linalg.LinAlgError:
            return np.nan
        half = solve_triangular(chol, sve, lower=True)
        sigma_c2 = sv * sv - float(half @ half)
        if sigma_c2 <= 0.0:
            return np.nan
        try:
            val = _aps_loglik_arrays(
                y, x_full, x2, w, z1, beta, su, gamma, delta, sve, chol, math.sqrt(sigma_c2)
            )
        except DomainError:
            return np.nan
        return val if math.isfinite(val) else np.nan

    point = np.concatenate(
        [
            params.beta,
            [params.sigma_v, params.sigma_u],
            params.gamma.ravel(),
            params.delta.ravel(),
            params.cov_v_eta,
            [params.cov_eta[a, b] for a, b in tril_idx],
        ]
    )
    try:
        result = numeric_hessian_se(f, point)
    except EvaluationError:
        return None, ("hessian_failed",)
    if not result.negative_definite:
        return None, ("hessian_not_pd",)
    return result.se, ()


def gmm_moments(data: Dataset, spec: EndoSpec, beta, p: ComposedErrorParams) -> np.ndarray:
    """Sample mean of the instrumented composed-error moment functions.

    The stacked moments are the standardized second moment minus one, the
    skew-direction score, and the frontier score instrumented with the
    intercept, the exogenous inputs, and the instruments.  All have zero
    expectation at the true parameters, and all vanish at the uninstrumented
    maximum-likelihood estimate when the instruments are the inputs
    themselves.
    """
    y, x1, x2, w = _blocks(data, spec)
    beta = np.asarray(beta, dtype=float)
    if beta.shape[0] != 1 + x1.shape[1] + x2.shape[1]:
        raise DomainError(
            f"beta has length {beta.shape[0]}, the design has {1 + x1.shape[1] + x2.shape[1]} columns"
        )
    x_full = np.column_stack([np.ones(data.n), x1, x2])
    w_tilde = np.column_stack([np.ones(data.n), x1, w])
    g = _moment_matrix(y, x_full, w_tilde, beta, p.sigma, p.lam)
    return g.mean(axis=0)


def _moment_matrix(y, x_full, w_tilde, beta, sigma, lam):
    """Per-observation moment contributions, one row per observation."""
    eps = y - x_full @ beta
    s = eps / sigma
    arg = lam * s
    with np.errstate(over="ignore", under="ignore"):
        mills = np.exp(-0.5 * arg * arg - 0.5 * _LOG_2PI - log_ndtr(-arg))
        score = s + lam * mills
        return np.column_stack([s * s - 1.0, eps * mills, w_tilde * score[:, None]])


@dataclass
class GmmFit:
    """Two-step method-of-moments frontier fit.

    ``moments`` holds the final stacked moment means and ``j_stat`` the
    overidentification statistic ``n`` times their weighted quadratic form
    (zero up to optimizer tolerance in the just-identified case).
    """

    beta: np.ndarray
    params: ComposedErrorParams
    n: int
    coef_names: tuple[str, ...]
    moments: np.ndarray
    j_stat: float
    flags: tuple[str, ...] = ()
    converged: bool = True

    def param_dict(self) -> dict[str, float]:
        out = {name: float(b) for name, b in zip(self.coef_names, self.beta)}
        out["sigma_v"] = self.params.sigma_v
        out["sigma_u"] = self.params.sigma_u
        return out


def _weight_chol(s_mat: np.ndarray) -> tuple[np.ndarray, tuple[str, ...]]:
    """Cholesky factor of the moment covariance, ridged or dropped if singular."""
    try:
        return np.linalg.cholesky(s_mat), ()
    except np.linalg.LinAlgError:
        pass
    q = s_mat.shape[0]
    ridge = 1e-8 * max(1.0, float(np.trace(s_mat)) / q)
    try:
        return np.linalg.cholesky(s_mat + ridge * np.eye(q)), ("weight_ridge",)
    except np.linalg.LinAlgError:
        return np.eye(q), ("weight_identity",)


def gmm_fit(data: Dataset, spec: EndoSpec) -> GmmFit:
    """Two-step instrumented moment estimation of the frontier.

    Step one minimizes the unweighted quadratic form of the moment means;
    step two reweights by the inverse sample covariance of the moment
    contributions at the step-one estimate.  The skew direction enters
    through an unconstrained odd reparametrization, so a wrong-skew sample
    simply drives it negative; that case is reported as a zero inefficiency
    scale with the ``wrong_skew`` flag.
    """
    data = data.canonical_order()
    y, x1, x2, w = _blocks(data, spec)
    n = data.n
    names = spec.coef_names()
    x_full = np.column_stack([np.ones(n), x1, x2])
    w_tilde = np.column_stack([np.ones(n), x1, w])
    k = x_full.shape[1]

    start = c2sls_fit(data, spec)
    flags = [f for f in start.flags if f == "weak_instruments"]
    su0 = max(start.params.sigma_u, SIGMA_U_START_FLOOR)
    sv0 = start.params.sigma_v
    theta0 = np.concatenate(
        [start.beta, [0.5 * math.log(sv0**2 + su0**2), math.asinh(su0 / sv0)]]
    )

    def objective(weight_chol):
        def f(theta):
            if abs(theta[k]) > 350.0 or abs(theta[k + 1]) > 50.0:
                return -np.inf
            sigma = math.exp(theta[k])
            lam = math.sinh(theta[k + 1])
            # far-out trial points can overflow the moment matrix; the finite
            # check below rejects them, so silence the intermediate reduction
            with np.errstate(invalid="ignore", over="ignore"):
                g_bar = _moment_matrix(y, x_full, w_tilde, theta[:k], sigma, lam).mean(axis=0)
            if not np.all(np.isfinite(g_bar)):
                return -np.inf
            if weight_chol is None:
                return -float(g_bar @ g_bar)
            half = solve_triangular(weight_chol, g_bar, lower=True)
            return -float(half @ half)

        return f

    res1 = maximize(objective(None), theta0)
    g_step1 = _moment_matrix(
        y, x_full, w_tilde, res1.argmax[:k],
        math.exp(res1.argmax[k]), math.sinh(res1.argmax[k + 1]),
    )
    centered = g_step1 - g_step1.mean(axis=0)
    chol, wflags = _weight_chol(centered.T @ centered / n)
    flags.extend(wflags)

    res2 = maximize(objective(chol), res1.argmax)
    if not res2.converged:
        flags.append("non_converged")
    beta = res2.argmax[:k]
    sigma = math.exp(res2.argmax[k])
    lam = math.sinh(res2.argmax[k + 1])
    if lam < 0.0:
        flags.append("wrong_skew")
        params = ComposedErrorParams(sigma_v=sigma, sigma_u=0.0)
    else:
        params = ComposedErrorParams(
            sigma_v=sigma / math.sqrt(1.0 + lam * lam),
            sigma_u=sigma * lam / math.sqrt(1.0 + lam * lam),
        )

    g_final = _moment_matrix(y, x_full, w_tilde, beta, sigma, lam).mean(axis=0)
    half = solve_triangular(chol, g_final, lower=True)
    return GmmFit(
        beta=beta,
        params=params,
        n=n,
        coef_names=names,
        moments=g_final,
        j_stat=n * float(half @ half),
        flags=tuple(flags),
        converged=res2.converged,
    )
