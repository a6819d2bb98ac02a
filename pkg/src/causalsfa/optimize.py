"""Quasi-Newton maximizer and finite-difference derivative helpers.

All estimators in the package maximize smooth log-likelihoods (or minimize
smooth quadratic forms) of modest dimension, so one deterministic BFGS
implementation with backtracking line search covers every fit.  Gradients are
central finite differences; standard errors come from the numeric Hessian at
the optimum.  No randomness enters except fixed, seeded perturbations for
restart attempts, so repeated runs are bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, EvaluationError

ARMIJO_SLOPE = 1e-4
ARMIJO_CONTRACTION = 0.5
MAX_BACKTRACKS = 50
_RESTART_ENTROPY = 20240917


@dataclass
class OptimResult:
    argmax: np.ndarray
    objective_value: float
    gradient_norm: float
    iterations: int
    converged: bool
    restarts: int = 0
    message: str = ""


def numeric_gradient(f, x, step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of ``f`` at ``x``.

    Per-coordinate step ``step * max(1, |x_i|)``.  Raises
    :class:`EvaluationError` naming the coordinate if a stencil evaluation
    is non-finite.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("x must be finite")
    g = np.empty_like(x)
    for i in range(x.size):
        h = step * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        fp = f(xp)
        fm = f(xm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise EvaluationError(f"objective non-finite at gradient stencil, coordinate {i}")
        g[i] = (fp - fm) / (2.0 * h)
    return g


def _gradient_robust(f, x, step: float = 1e-6) -> np.ndarray:
    # Like numeric_gradient but falls back to a one-sided difference when one
    # stencil arm leaves the objective's domain (constraint boundaries).
    x = np.asarray(x, dtype=float)
    f0 = None
    g = np.empty_like(x)
    for i in range(x.size):
        h = step * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        fp = f(xp)
        fm = f(xm)
        if np.isfinite(fp) and np.isfinite(fm):
            g[i] = (fp - fm) / (2.0 * h)
            continue
        if f0 is None:
            f0 = f(x)
        if np.isfinite(fp) and np.isfinite(f0):
            g[i] = (fp - f0) / h
        elif np.isfinite(fm) and np.isfinite(f0):
            g[i] = (f0 - fm) / h
        else:
            raise EvaluationError(f"objective non-finite at gradient stencil, coordinate {i}")
    return g


def _bfgs_run(f, x0, gtol, max_iter):
    n = x0.size
    x = x0.copy()
    fx = f(x)
    if not np.isfinite(fx):
        raise EvaluationError("objective is not finite at the start point")
    g = _gradient_robust(f, x)
    B = np.eye(n)  # approximates the inverse of -hessian, kept positive definite
    it = 0
    message = "gradient tolerance reached"
    while True:
        gnorm = float(np.linalg.norm(g))
        if gnorm <= gtol * max(1.0, abs(fx)):
            return x, fx, gnorm, it, True, message
        if it >= max_iter:
            return x, fx, gnorm, it, False, "iteration limit reached"
        d = B @ g
        slope = float(g @ d)
        if slope <= 0.0:  # stale curvature estimate, reset to steepest ascent
            B = np.eye(n)
            d = g.copy()
            slope = float(g @ g)
        alpha = 1.0
        accepted = False
        for _ in range(MAX_BACKTRACKS):
            x_new = x + alpha * d
            f_new = f(x_new)
            if np.isfinite(f_new) and f_new >= fx + ARMIJO_SLOPE * alpha * slope:
                accepted = True
                break
            alpha *= ARMIJO_CONTRACTION
        if not accepted:
            gnorm = float(np.linalg.norm(g))
            converged = gnorm <= gtol * max(1.0, abs(fx))
            return x, fx, gnorm, it, converged, "line search failed"
        g_new = _gradient_robust(f, x_new)
        s = x_new - x
        yhat = g - g_new  # positive curvature along s for a concave objective
        sy = float(s @ yhat)
        if sy > 1e-12 * float(np.linalg.norm(s)) * max(float(np.linalg.norm(yhat)), 1e-300):
            rho = 1.0 / sy
            Bs = B @ yhat
            # inverse-hessian BFGS update written to avoid forming rank-1 matrices twice
            sBy = np.outer(s, Bs)
            B = B - rho * (sBy + sBy.T) + rho * (1.0 + rho * float(yhat @ Bs)) * np.outer(s, s)
        x, fx, g = x_new, f_new, g_new
        it += 1


def _newton_polish(f, x, fx, g, gtol_abs, max_steps=4):
    # One accurate Hessian, then a few frozen-Hessian Newton corrections.
    # Accept a step only if the gradient norm strictly decreases; this drives
    # the stationarity residual far below the line-search tolerance.
    try:
        H = numeric_hessian(f, x)
    except EvaluationError:
        return x, fx, g
    gnorm = float(np.linalg.norm(g))
    for _ in range(max_steps):
        if gnorm <= gtol_abs:
            break
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            break
        damp = 1.0
        improved = False
        for _ in range(3):
            x_try = x - damp * step
            f_try = f(x_try)
            if np.isfinite(f_try):
                try:
                    g_try = _gradient_robust(f, x_try)
                except EvaluationError:
                    g_try = None
                if g_try is not None and float(np.linalg.norm(g_try)) < gnorm:
                    x, fx, g = x_try, f_try, g_try
                    gnorm = float(np.linalg.norm(g))
                    improved = True
                    break
            damp *= 0.5
        if not improved:
            break
    return x, fx, g


def maximize(
    f,
    x0,
    *,
    gtol: float = 1e-6,
    max_iter: int = 500,
    n_restarts: int = 3,
    polish: bool = True,
) -> OptimResult:
    """Maximize ``f`` by BFGS ascent with Armijo backtracking.

    Parameters
    ----------
    f : callable
        Objective mapping a 1-d float array to a float.  May return ``nan``
        or ``-inf`` away from the start; such trial points are rejected by
        the line search.
    x0 : array_like
        Start point; the objective must be finite here.
    gtol : float
        Convergence declared when ``||grad||_2 <= gtol * max(1, |f|)``.
    max_iter : int
        Iteration cap per run.
    n_restarts : int
        Extra runs from deterministically perturbed starts when a run fails
        to converge.  The best run by objective value is reported.
    polish : bool
        After the best run, take up to a few Newton steps with a numeric
        Hessian to sharpen stationarity.  Never degrades the gradient norm.

    Returns
    -------
    OptimResult
        ``converged`` is False when no run met the tolerance; the best point
        found is still returned, never a silent success.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim != 1:
        raise DomainError("x0 must be a 1-d array")
    if not np.all(np.isfinite(x0)):
        raise DomainError("x0 must be finite")

    best = None
    restarts_used = 0
    for k in range(n_restarts + 1):
        if k == 0:
            start = x0
        else:
            restarts_used = k
            rng = np.random.Generator(
                np.random.Philox(np.random.SeedSequence(entropy=_RESTART_ENTROPY, spawn_key=(k,)))
            )
            scale = 0.25 * np.maximum(1.0, np.abs(x0))
            start = x0 + scale * rng.standard_normal(x0.size)
            if not np.isfinite(f(start)):
                continue
        run = _bfgs_run(f, start, gtol, max_iter)
        if best is None:
            best = run
        else:
            tol = 1e-12 * max(1.0, abs(best[1]))
            if run[1] > best[1] + tol or (run[1] >= best[1] - tol and run[4] and not best[4]):
                best = run
        if best[4]:
            break

    x, fx, gnorm, it, converged, message = best
    g = _gradient_robust(f, x)
    if polish:
        x, fx, g = _newton_polish(f, x, fx, g, gtol_abs=1e-9 * max(1.0, abs(fx)))
        gnorm = float(np.linalg.norm(g))
        converged = converged or gnorm <= gtol * max(1.0, abs(fx))
    return OptimResult(
        argmax=x,
        objective_value=float(fx),
        gradient_norm=float(gnorm),
        iterations=it,
        converged=bool(converged),
        restarts=restarts_used,
        message=message,
    )


def numeric_hessian(f, x, step: float = 1e-4) -> np.ndarray:
    """Symmetric central-difference Hessian of ``f`` at ``x``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    h = step * np.maximum(1.0, np.abs(x))
    H = np.empty((n, n))
    f0 = f(x)
    if not np.isfinite(f0):
        raise EvaluationError("objective is not finite at the Hessian center")
    for i in range(n):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h[i]
        xm[i] -= h[i]
        fp, fm = f(xp), f(xm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise EvaluationError(f"objective non-finite at Hessian stencil, coordinate {i}")
        H[i, i] = (fp - 2.0 * f0 + fm) / h[i] ** 2
        for j in range(i + 1, n):
            xpp = x.copy()
            xpm = x.copy()
            xmp = x.copy()
            xmm = x.copy()
            xpp[i] += h[i]
            xpp[j] += h[j]
            xpm[i] += h[i]
            xpm[j] -= h[j]
            xmp[i] -= h[i]
            xmp[j] += h[j]
            xmm[i] -= h[i]
            xmm[j] -= h[j]
            vals = [f(xpp), f(xpm), f(xmp), f(xmm)]
            if not all(np.isfinite(v) for v in vals):
                raise EvaluationError(
                    f"objective non-finite at Hessian stencil, coordinates ({i}, {j})"
                )
            H[i, j] = H[j, i] = (vals[0] - vals[1] - vals[2] + vals[3]) / (4.0 * h[i] * h[j])
    return H


@dataclass
class StdErrResult:
    se: np.ndarray | None
    hessian: np.ndarray
    negative_definite: bool


def numeric_hessian_se(f, xhat, step: float = 1e-4) -> StdErrResult:
    """Standard errors of a maximum from the numeric Hessian.

    Covariance is ``inv(-H)``.  When ``-H`` is not positive definite the
    result is flagged and carries no standard errors instead of raising;
    callers surface the flag to the user.
    """
    H = numeric_hessian(f, xhat, step=step)
    neg = -H
    try:
        L = np.linalg.cholesky(neg)
    except np.linalg.LinAlgError:
        return StdErrResult(se=None, hessian=H, negative_definite=False)
    eye = np.eye(H.shape[0])
    Linv = np.linalg.solve(L, eye)
    cov = Linv.T @ Linv
    return StdErrResult(se=np.sqrt(np.diag(cov)), hessian=H, negative_definite=True)
