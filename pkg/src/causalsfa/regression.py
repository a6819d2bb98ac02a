"""Least-squares helpers shared by the estimators."""

from __future__ import annotations

import numpy as np
from scipy.linalg import qr

from .errors import CollinearityError


def ols(X: np.ndarray, y: np.ndarray, names: list[str] | None = None) -> np.ndarray:
    """OLS coefficients with an explicit rank check.

    Rank deficiency raises :class:`CollinearityError` naming the dependent
    columns (identified by pivoted QR: the pivots beyond the numerical rank).
    """
    n, k = X.shape
    if k == 0:
        return np.empty(0)
    _, R, piv = qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(n, k) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    if rank < k:
        if names is None:
            names = [f"col{j}" for j in range(k)]
        culprits = sorted(names[j] for j in piv[rank:])
        raise CollinearityError(culprits)
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    return beta


def central_moments(resid: np.ndarray) -> tuple[float, float]:
    """Second and third central moments of a residual vector."""
    centered = resid - resid.mean()
    return float(np.mean(centered**2)), float(np.mean(centered**3))
