import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import cd_lasso, enum_nnls
from pvartarch.errors import NonFiniteInput
from pvartarch.solvers import lars_lasso, nnls, nnls_with_residual, select_aic


def objective(X, y, b, lam):
    r = y - X @ b
    return r @ r + lam * np.abs(b).sum()


def problem(seed, n=40, p=8):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    X = (X - X.mean(0)) / X.std(0)
    beta = np.where(rng.uniform(size=p) < 0.4, rng.normal(0, 2, p), 0.0)
    y = X @ beta + rng.standard_normal(n)
    return X, y - y.mean()


@pytest.mark.parametrize("seed", range(6))
def test_path_matches_coordinate_descent(seed):
    X, y = problem(seed)
    path = lars_lasso(X, y)
    lam_max = 2 * np.abs(X.T @ y).max()
    assert path.lambdas[0] == pytest.approx(lam_max)
    for frac in (0.9, 0.5, 0.2, 0.05, 0.01):
        lam = frac * lam_max
        ours = path.coef_at(lam)
        ref = cd_lasso(X, y, lam)
        np.testing.assert_allclose(ours, ref, atol=1e-6)
        assert objective(X, y, ours, lam) <= objective(X, y, ref, lam) + 1e-8


def test_large_penalty_gives_zero():
    X, y = problem(3)
    path = lars_lasso(X, y)
    lam_max = 2 * np.abs(X.T @ y).max()
    np.testing.assert_array_equal(path.coef_at(lam_max), 0.0)
    np.testing.assert_array_equal(path.coef_at(10 * lam_max), 0.0)


def test_orthonormal_design_soft_thresholds():
    rng = np.random.default_rng(5)
    Q, _ = np.linalg.qr(rng.standard_normal((30, 6)))
    y = rng.standard_normal(30) * 3
    path = lars_lasso(Q, y)
    z = Q.T @ y
    for lam in (0.1, 0.5, 1.0, 2.5):
        expected = np.sign(z) * np.maximum(np.abs(z) - lam / 2, 0)
        np.testing.assert_allclose(path.coef_at(lam), expected, atol=1e-10)


def test_path_end_is_least_squares():
    X, y = problem(7, n=60, p=6)
    path = lars_lasso(X, y)
    ols = np.linalg.lstsq(X, y, rcond=None)[0]
    np.testing.assert_allclose(path.coefs[-1], ols, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_rss_decreases_and_l1_grows_along_path(seed):
    X, y = problem(seed, n=30, p=6)
    path = lars_lasso(X, y)
    assert (np.diff(path.lambdas) < 0).all()
    assert (np.diff(path.rss) <= 1e-9 * path.rss[0]).all()
    l1 = np.abs(path.coefs).sum(axis=1)
    assert (np.diff(l1) >= -1e-9).all()
    # stationarity at every breakpoint
    for lam, b in zip(path.lambdas, path.coefs):
        grad = 2 * X.T @ (y - X @ b)
        active = b != 0
        np.testing.assert_allclose(grad[active], lam * np.sign(b[active]), atol=1e-7 * (1 + lam))
        assert (np.abs(grad[~active]) <= lam + 1e-7 * (1 + lam)).all()


def test_unit_weights_equal_unweighted():
    X, y = problem(11)
    a = lars_lasso(X, y)
    b = lars_lasso(X, y, weights=np.ones(y.size))
    np.testing.assert_allclose(a.lambdas, b.lambdas)
    np.testing.assert_allclose(a.coefs, b.coefs)


def test_weights_match_row_scaling():
    X, y = problem(12)
    w = np.random.default_rng(0).uniform(0.2, 3, y.size)
    a = lars_lasso(X, y, weights=w)
    b = lars_lasso(X * np.sqrt(w)[:, None], y * np.sqrt(w))
    np.testing.assert_allclose(a.coefs, b.coefs, atol=1e-12)


def test_nonfinite_rejected():
    X, y = problem(1)
    X[3, 2] = np.nan
    with pytest.raises(NonFiniteInput):
        lars_lasso(X, y)
    with pytest.raises(NonFiniteInput):
        lars_lasso(*problem(1), weights=np.zeros(40))


def test_aic_selection_prefers_smaller_model_on_tie():
    X, y = problem(2)
    path = lars_lasso(X, y)
    aic = path.aic()
    k, theta = select_aic(path)
    assert aic[k] == pytest.approx(aic.min())
    np.testing.assert_array_equal(theta, path.coefs[k])
    # duplicate the last breakpoint with a larger df: the tie resolves to the smaller one
    from dataclasses import replace

    bumped = replace(
        path,
        lambdas=np.append(path.lambdas, 0.0),
        coefs=np.vstack([path.coefs, path.coefs[k]]),
        rss=np.append(path.rss, path.rss[k]),
        df=np.append(path.df, path.df[k] + 1e-12),
        active=path.active + (path.active[k],),
    )
    assert select_aic(bumped)[0] == k


def test_aic_on_noise_selects_nearly_nothing():
    rng = np.random.default_rng(8)
    picked = []
    for _ in range(30):
        X = rng.standard_normal((400, 10))
        y = rng.standard_normal(400)
        k, theta = select_aic(lars_lasso(X, y))
        picked.append(np.count_nonzero(theta))
    assert np.mean(picked) < 3


def test_aic_recovers_noiseless_sparse_signal():
    rng = np.random.default_rng(9)
    X = rng.standard_normal((200, 12))
    beta = np.zeros(12)
    beta[[1, 4, 9]] = [2.0, -1.5, 1.0]
    y = X @ beta
    k, theta = select_aic(lars_lasso(X, y))
    np.testing.assert_allclose(theta, beta, atol=1e-8)


def test_nnls_identity():
    y = np.array([1.0, -2.0, 3.0, -0.5])
    sol = nnls(np.eye(4), y)
    np.testing.assert_allclose(sol.coef, np.maximum(y, 0))


def test_nnls_equals_ols_when_feasible():
    rng = np.random.default_rng(4)
    X = rng.uniform(size=(50, 4))
    y = X @ np.array([1.0, 2.0, 0.5, 3.0]) + 0.01 * rng.standard_normal(50)
    ols = np.linalg.lstsq(X, y, rcond=None)[0]
    assert (ols > 0).all()
    np.testing.assert_allclose(nnls(X, y).coef, ols, atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 7))
def test_nnls_matches_enumeration(seed, p):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((3 * p, p))
    y = rng.standard_normal(3 * p)
    sol = nnls_with_residual(X, y)
    best, arg = enum_nnls(X, y)
    assert sol.objective() == pytest.approx(best, abs=1e-8)
    np.testing.assert_allclose(sol.coef, arg, atol=1e-7)
    assert (sol.coef >= 0).all()
    # KKT: residual orthogonal to active columns, non-positive gradient elsewhere
    g = X.T @ sol.residual
    assert np.abs(g[sol.active]).max(initial=0) < 1e-8
    assert (g[~sol.active] <= 1e-8).all()
