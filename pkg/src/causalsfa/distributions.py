"""Composed-error and folded-normal densities for stochastic frontier models.

The workhorse distribution is the Normal-Half-Normal composed error
``eps = v - u`` with ``v ~ N(0, sigma_v^2)`` independent of
``u ~ |N(0, sigma_u^2)|``.  Its density is

    f(eps) = (2 / sigma) * phi(eps / sigma) * Phi(-lambda * eps / sigma),

where ``sigma^2 = sigma_v^2 + sigma_u^2`` and ``lambda = sigma_u / sigma_v``.
The sign convention is the production-frontier one: inefficiency pulls the
outcome down, so the composed error is left skewed.  Cost-frontier problems
are handled upstream by negating residuals.

Also provided: central moments of the half-normal inefficiency term and the
density of ``u`` conditional on a vector of correlated Gaussian disturbances
(a folded normal), which the endogeneity estimators need.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_ndtr, ndtr

from .errors import DomainError

# Moments of |N(0, s^2)|: mean = s * HALF_NORMAL_MEAN_COEF, variance =
# s^2 * HALF_NORMAL_VAR_COEF, third central moment = s^3 * HALF_NORMAL_SKEW_COEF.
HALF_NORMAL_MEAN_COEF = math.sqrt(2.0 / math.pi)
HALF_NORMAL_VAR_COEF = 1.0 - 2.0 / math.pi
HALF_NORMAL_SKEW_COEF = math.sqrt(2.0 / math.pi) * (4.0 - math.pi) / math.pi

_LOG_2PI = math.log(2.0 * math.pi)


def _as_finite_array(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    return arr


def std_normal_pdf(x):
    """Standard normal density, elementwise over ``x``."""
    arr = _as_finite_array(x, "x")
    out = np.exp(-0.5 * arr * arr) / math.sqrt(2.0 * math.pi)
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def std_normal_cdf(x):
    """Standard normal CDF, elementwise over ``x``."""
    arr = _as_finite_array(x, "x")
    out = ndtr(arr)
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def std_normal_logcdf(x):
    """log Phi(x), stable far into the lower tail (x near -40 and beyond)."""
    arr = _as_finite_array(x, "x")
    out = log_ndtr(arr)
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


@dataclass(frozen=True)
class ComposedErrorParams:
    """Scale parameters of the Normal-Half-Normal composed error.

    ``sigma_v`` must be strictly positive; ``sigma_u = 0`` is allowed and
    collapses the density to a pure Gaussian.
    """

    sigma_v: float
    sigma_u: float

    def __post_init__(self):
        object.__setattr__(self, "sigma_v", float(self.sigma_v))
        object.__setattr__(self, "sigma_u", float(self.sigma_u))
        if not (math.isfinite(self.sigma_v) and self.sigma_v > 0.0):
            raise DomainError("sigma_v must be finite and > 0")
        if not (math.isfinite(self.sigma_u) and self.sigma_u >= 0.0):
            raise DomainError("sigma_u must be finite and >= 0")

    @property
    def sigma(self) -> float:
        """Total scale sqrt(sigma_v^2 + sigma_u^2)."""
        return math.hypot(self.sigma_v, self.sigma_u)

    @property
    def lam(self) -> float:
        """Skewness ratio sigma_u / sigma_v."""
        return self.sigma_u / self.sigma_v


def composed_error_logpdf(eps, p: ComposedErrorParams):
    """Log density of the composed error ``eps = v - u``.

    Parameters
    ----------
    eps : array_like
        Evaluation points; must be finite.
    p : ComposedErrorParams
        Scale parameters.

    Returns
    -------
    float or ndarray
        ``log f(eps)``, elementwise.  Stable for slant arguments
        ``lambda * eps / sigma`` far into the tail (|.| ~ 40) where the
        naive ``log(Phi(.))`` would underflow.
    """
    arr = _as_finite_array(eps, "eps")
    out = composed_error_logpdf_rowwise(arr, p.sigma_v, p.sigma_u)
    return float(out) if np.isscalar(eps) or arr.ndim == 0 else out


def composed_error_logpdf_rowwise(eps, sigma_v, sigma_u):
    """Composed-error log density with per-row scales.

    Same formula as :func:`composed_error_logpdf` but ``sigma_v`` and
    ``sigma_u`` may be arrays broadcast against ``eps``, which the
    interaction-scaled likelihoods (difference-in-differences, regression
    discontinuity) rely on.  ``sigma_u`` entries may be zero.
    """
    eps = np.asarray(eps, dtype=float)
    sigma_v = np.asarray(sigma_v, dtype=float)
    sigma_u = np.asarray(sigma_u, dtype=float)
    if np.any(sigma_v <= 0.0) or not np.all(np.isfinite(sigma_v)):
        raise DomainError("sigma_v must be finite and > 0")
    if np.any(sigma_u < 0.0) or not np.all(np.isfinite(sigma_u)):
        raise DomainError("sigma_u must be finite and >= 0")
    # extreme scales saturate to -inf/nan rather than warn; optimizers reject them
    with np.errstate(over="ignore", divide="ignore", invalid="ignore", under="ignore"):
        sigma2 = sigma_v * sigma_v + sigma_u * sigma_u
        sigma = np.sqrt(sigma2)
        z = eps / sigma
        slant = (sigma_u / sigma_v) * z
        return (
            math.log(2.0) - 0.5 * _LOG_2PI - 0.5 * np.log(sigma2) - 0.5 * z * z + log_ndtr(-slant)
        )


@dataclass(frozen=True)
class HalfNormalMoments:
    mean: float
    variance: float
    third_central: float


def halfnormal_moments(sigma_u: float) -> HalfNormalMoments:
    """Central moments of the half-normal inefficiency term |N(0, sigma_u^2)|."""
    if not (math.isfinite(sigma_u) and sigma_u >= 0.0):
        raise DomainError("sigma_u must be finite and >= 0")
    return HalfNormalMoments(
        mean=HALF_NORMAL_MEAN_COEF * sigma_u,
        variance=HALF_NORMAL_VAR_COEF * sigma_u**2,
        third_central=HALF_NORMAL_SKEW_COEF * sigma_u**3,
    )


@dataclass(frozen=True)
class FoldedNormalCondParams:
    """Parameters of the distribution of ``u`` given correlated noise ``eta``.

    ``u = |U|`` where ``(U, eta)`` is jointly Gaussian with ``U ~ N(0, sigma_u^2)``,
    ``cov(U, eta) = cross_cov`` and ``var(eta) = eta_cov``.  Conditionally on
    ``eta``, ``u`` is folded normal with location ``cross_cov' eta_cov^{-1} eta``
    and squared scale ``sigma_u^2 - cross_cov' eta_cov^{-1} cross_cov`` (must be
    positive, checked at construction).
    """

    sigma_u: float
    cross_cov: np.ndarray
    eta_cov: np.ndarray
    _eta_prec: np.ndarray = field(init=False, repr=False, compare=False)
    _cond_var: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (math.isfinite(self.sigma_u) and self.sigma_u > 0.0):
            raise DomainError("sigma_u must be finite and > 0")
        cross = np.atleast_1d(np.asarray(self.cross_cov, dtype=float))
        cov = np.atleast_2d(np.asarray(self.eta_cov, dtype=float))
        if not (np.all(np.isfinite(cross)) and np.all(np.isfinite(cov))):
            raise DomainError("covariance blocks must be finite")
        k = cross.shape[0]
        if cov.shape != (k, k):
            raise DomainError("eta_cov shape does not match cross_cov length")
        if not np.allclose(cov, cov.T):
            raise DomainError("eta_cov must be symmetric")
        eigvals = np.linalg.eigvalsh(cov)
        if eigvals.min() <= 0.0:
            raise DomainError("eta_cov must be positive definite")
        prec = np.linalg.inv(cov)
        cond_var = self.sigma_u**2 - float(cross @ prec @ cross)
        if cond_var <= 0.0:
            raise DomainError("conditional variance of u given eta is not positive")
        object.__setattr__(self, "cross_cov", cross)
        object.__setattr__(self, "eta_cov", cov)
        object.__setattr__(self, "_eta_prec", prec)
        object.__setattr__(self, "_cond_var", cond_var)

    @property
    def cond_var(self) -> float:
        return self._cond_var


def folded_normal_cond_pdf(u, eta, p: FoldedNormalCondParams):
    """Density of ``u >= 0`` conditional on the Gaussian vector ``eta``.

    The two-branch form reflects the fold: with conditional location ``m`` and
    variance ``s^2``, ``f(u | eta) = N(u; m, s^2) + N(u; -m, s^2)`` on
    ``u >= 0`` and zero below.  Integrates to one for any ``m``.
    """
    u_arr = _as_finite_array(u, "u")
    eta_arr = _as_finite_array(eta, "eta")
    eta_arr = np.atleast_1d(eta_arr)
    if eta_arr.shape != p.cross_cov.shape:
        raise DomainError("eta length does not match cross_cov length")
    m = float(p.cross_cov @ p._eta_prec @ eta_arr)
    s2 = p.cond_var
    norm = 1.0 / math.sqrt(2.0 * math.pi * s2)
    dens = norm * (
        np.exp(-0.5 * (u_arr - m) ** 2 / s2) + np.exp(-0.5 * (u_arr + m) ** 2 / s2)
    )
    dens = np.where(u_arr < 0.0, 0.0, dens)
    return float(dens) if np.isscalar(u) or u_arr.ndim == 0 else dens
