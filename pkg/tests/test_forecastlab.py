import warnings

import numpy as np
import pytest
from sklearn.linear_model import Lasso

from fnar.forecastlab import (
    WindowPlan,
    diebold_mariano,
    fit_ar1,
    fit_lasso_var,
    fit_minnesota_bvar,
    fit_pc_ar,
    lasso_cd,
    run_comparison,
)
from fnar.montecarlo import SyntheticSpec, generate
from oracles import ols_with_intercept


def var_data(seed=0, T=200, N=4):
    rng = np.random.default_rng(seed)
    A = 0.3 * np.eye(N) + 0.1 * rng.standard_normal((N, N))
    y = np.zeros((T, N))
    for t in range(1, T):
        y[t] = 0.5 + A @ y[t - 1] + rng.standard_normal(N)
    return y


def test_ar1_exact_recursion():
    y = 8.0 * 0.5 ** np.arange(20)
    rho, alpha = fit_ar1(y)
    assert rho == pytest.approx(0.5, abs=1e-12) and alpha == pytest.approx(0.0, abs=1e-12)


def test_ar1_iid_and_degenerate():
    rho, _ = fit_ar1(np.random.default_rng(0).standard_normal(20_000))
    assert abs(rho) < 0.03
    with pytest.raises(ValueError):
        fit_ar1([1.0, 2.0])
    with pytest.warns(UserWarning):
        assert fit_ar1([3.0, 3.0, 3.0, 3.0]) == (0.0, 3.0)


def test_pc_ar_one_factor_and_zero_components():
    rng = np.random.default_rng(1)
    g = np.cumsum(rng.standard_normal(100)) * 0.1 + rng.standard_normal(100)
    lam = np.array([1.0, 2.0, -1.0, 0.5, 1.5])
    Y = np.outer(g, lam)
    cov = np.cov(Y, rowvar=False)
    vals = np.sort(np.linalg.eigvalsh(cov))[::-1]
    assert vals[0] / vals.sum() > 1 - 1e-12
    fit = fit_pc_ar(Y, 1)
    np.testing.assert_allclose(np.abs(fit.components[:, 0]), np.abs(lam) / np.linalg.norm(lam), atol=1e-10)
    with pytest.raises(ValueError):
        fit_pc_ar(Y, 2)
    Y2 = var_data(2)
    fit0 = fit_pc_ar(Y2, 0)
    for i in range(Y2.shape[1]):
        rho, alpha = fit_ar1(Y2[:, i])
        np.testing.assert_allclose(fit0.coef[i], [alpha, rho], rtol=1e-10)


def test_lasso_large_lambda_collapses():
    Y = var_data(3)
    fit = fit_lasso_var(Y, lam=1e6)
    np.testing.assert_array_equal(fit.coef, 0.0)
    np.testing.assert_allclose(fit.intercept, Y[1:].mean(axis=0), rtol=1e-12)
    assert fit.params.shape == (4, 5)


def test_lasso_zero_lambda_is_ols():
    Y = var_data(4)
    fit = fit_lasso_var(Y, lam=0.0)
    for i in range(4):
        want = ols_with_intercept(Y[:-1], Y[1:, i])
        np.testing.assert_allclose(fit.params[i], want, atol=1e-6)


def test_lasso_matches_sklearn():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((150, 6))
    y = X @ [1.0, 0, 0, -0.5, 0, 0.2] + 0.3 * rng.standard_normal(150)
    b0, w = lasso_cd(X, y, 0.05)
    ref = Lasso(alpha=0.05, tol=1e-12, max_iter=100_000).fit(X, y)
    np.testing.assert_allclose(w, ref.coef_, atol=1e-6)
    assert b0 == pytest.approx(ref.intercept_, abs=1e-6)


def test_lasso_support_recovery():
    hits = []
    for rep in range(5):
        rng = np.random.default_rng([6, rep])
        N, T = 6, 400
        A = np.zeros((N, N))
        for i in range(N):
            A[i, [i, (i + 1) % N]] = [0.5, 0.3]
        y = np.zeros((T, N))
        for t in range(1, T):
            y[t] = A @ y[t - 1] + rng.standard_normal(N)
        fit = fit_lasso_var(y)
        hits.append(np.mean(np.abs(fit.coef[A != 0]) > 1e-8))
    assert np.mean(hits) >= 0.8


def test_bvar_limits():
    Y = var_data(7)
    dogmatic = fit_minnesota_bvar(Y, tightness=0.0)
    np.testing.assert_array_equal(dogmatic.coef, 0.0)
    loose = fit_minnesota_bvar(Y, tightness=1e6)
    for i in range(4):
        np.testing.assert_allclose(loose.params[i], ols_with_intercept(Y[:-1], Y[1:, i]), atol=1e-6)
    own = fit_minnesota_bvar(Y, tightness=0.0, prior_own_mean=1.0)
    np.testing.assert_array_equal(own.coef, np.eye(4))


def test_bvar_scale_equivariance():
    Y = var_data(8)
    c = 7.0
    Ys = Y.copy()
    Ys[:, 2] *= c
    a, b = fit_minnesota_bvar(Y), fit_minnesota_bvar(Ys)
    D = np.ones(4)
    D[2] = c
    # coef_ij scales by D_i / D_j, intercepts by D_i
    np.testing.assert_allclose(b.coef, a.coef * D[:, None] / D[None, :], rtol=1e-9)
    np.testing.assert_allclose(b.intercept, a.intercept * D, rtol=1e-9)


def test_dm_conventions():
    e = np.random.default_rng(0).standard_normal(50)
    r = diebold_mariano(e, e)
    assert (r.statistic, r.p_value, r.defined) == (0.0, 1.0, False)
    r2 = diebold_mariano(e, np.sqrt(e**2 + 1.0))
    assert r2.statistic < 0 and r2.p_value == 0.0
    noisy = e + 0.5 * np.random.default_rng(1).standard_normal(50)
    r3 = diebold_mariano(e * 0.5, noisy)
    assert r3.defined and r3.statistic < 0
    assert diebold_mariano(e, noisy, lags=3).defined
    with pytest.raises(ValueError):
        diebold_mariano(e[:5], e[:5])


def test_dm_size_quick():
    rng = np.random.default_rng(3)
    rej = [diebold_mariano(*rng.standard_normal((2, 100))).p_value < 0.05 for _ in range(200)]
    assert 0.01 <= np.mean(rej) <= 0.1


@pytest.fixture(scope="module")
def fnar_data():
    return generate(SyntheticSpec(N=5, m=10, r=2, T=120, noise_scale=0.3, seed=4))


def test_ar1_only_ratios_one(fnar_data):
    rep = run_comparison(fnar_data.y, None, WindowPlan.last_n(120, 20), models=("ar1",))
    np.testing.assert_array_equal(rep.mse_ratios()["ar1"], 1.0)


def test_order_invariance_and_no_lookahead(fnar_data):
    plan = WindowPlan.last_n(120, 15)
    kw = dict(configs={"lasso_var": {"cv_folds": 5}})
    a = run_comparison(fnar_data.y, fnar_data.truth, plan, models=("fnar", "ar1", "bvar", "pc_ar"), **kw)
    b = run_comparison(fnar_data.y, fnar_data.truth, plan, models=("pc_ar", "bvar", "ar1", "fnar"), **kw)
    assert a.mse().sort_index(axis=1).equals(b.mse().sort_index(axis=1))
    assert a.dm_table().sort_values(["node", "model"]).reset_index(drop=True).equals(
        b.dm_table().sort_values(["node", "model"]).reset_index(drop=True)
    )
    np.testing.assert_array_equal(a.mse_ratios()["ar1"], 1.0)
    dm = a.dm_table()
    assert len(dm) == 3 * 5
    assert plan.ends() == range(104, 119)


def test_window_plan_validation():
    with pytest.raises(ValueError):
        WindowPlan(10, 5)
    with pytest.raises(ValueError):
        run_comparison(np.zeros((20, 2)), None, WindowPlan(5, 19), models=("ar1",))
