"""Least-squares helpers and the effect-decomposition container."""

import numpy as np
import pytest

from causalsfa.errors import CollinearityError, DomainError
from causalsfa.regression import central_moments, ols
from causalsfa.results import Decomposition


def test_ols_matches_closed_form_normal_equations():
    rng = np.random.default_rng(3)
    x = np.column_stack([np.ones(200), rng.standard_normal((200, 3))])
    y = x @ np.array([1.0, -0.5, 2.0, 0.25]) + 0.1 * rng.standard_normal(200)
    beta = ols(x, y)
    oracle = np.linalg.solve(x.T @ x, x.T @ y)
    assert np.max(np.abs(beta - oracle)) < 1e-10


def test_ols_exact_on_noiseless_data():
    x = np.column_stack([np.ones(5), np.arange(5.0)])
    y = 3.0 - 2.0 * np.arange(5.0)
    beta = ols(x, y)
    assert np.max(np.abs(beta - [3.0, -2.0])) < 1e-12


def test_ols_names_collinear_columns():
    x = np.column_stack([np.ones(30), np.arange(30.0), 2.0 * np.arange(30.0)])
    with pytest.raises(CollinearityError) as exc:
        ols(x, np.zeros(30), names=["const", "z", "z2"])
    msg = str(exc.value)
    assert "z" in msg or "z2" in msg


def test_ols_collinear_default_names():
    x = np.zeros((10, 2))
    x[:, 0] = 1.0
    x[:, 1] = 1.0
    with pytest.raises(CollinearityError, match="col"):
        ols(x, np.zeros(10))


def test_ols_empty_design():
    assert ols(np.empty((4, 0)), np.zeros(4)).shape == (0,)


def test_central_moments_manual_oracle():
    resid = np.array([1.0, 2.0, 4.0, 9.0])
    mean = 4.0
    m2 = float(np.mean((resid - mean) ** 2))
    m3 = float(np.mean((resid - mean) ** 3))
    got2, got3 = central_moments(resid)
    assert abs(got2 - m2) < 1e-14
    assert abs(got3 - m3) < 1e-14
    # hand values: deviations (-3,-2,0,5)
    assert abs(got2 - 38.0 / 4.0) < 1e-14
    assert abs(got3 - 90.0 / 4.0) < 1e-14


def test_decomposition_identity_enforced():
    d = Decomposition(total=0.7, direct=1.0, indirect=0.3)
    assert d.total == 0.7
    with pytest.raises(DomainError, match="identity"):
        Decomposition(total=0.5, direct=1.0, indirect=0.3)


def test_decomposition_from_channels():
    d = Decomposition.from_channels(direct=2.0, indirect=-0.5)
    assert d.total == 2.5
    assert d.direct == 2.0
    assert d.indirect == -0.5


def test_decomposition_identity_is_relative_at_scale():
    big = 1e12
    # absolute slack of 50 would fail an absolute 1e-10 test but is inside
    # the relative tolerance at this magnitude
    d = Decomposition(total=big, direct=big + 50.0, indirect=50.0)
    assert d.direct - d.indirect == big


def test_decomposition_rejects_non_finite():
    with pytest.raises(DomainError, match="finite"):
        Decomposition(total=float("nan"), direct=0.0, indirect=0.0)
    with pytest.raises(DomainError, match="finite"):
        Decomposition(total=0.0, direct=float("inf"), indirect=0.0)
