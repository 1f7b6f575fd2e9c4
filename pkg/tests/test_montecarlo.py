import numpy as np
import pytest

from fnar.estimation import fit_ols
from fnar.montecarlo import (
    SyntheticSpec,
    factor_error,
    generate,
    loading_error,
    loglog_slope,
    rate_experiment_prop1,
    rate_experiment_prop2,
    slope_table,
)
from fnar.netfactors import align_signs, estimate_factor_model


def test_generate_deterministic_and_shapes():
    spec = SyntheticSpec(N=4, m=6, r=2, T=30, seed=5)
    a, b = generate(spec), generate(spec)
    np.testing.assert_array_equal(a.panel.weights, b.panel.weights)
    np.testing.assert_array_equal(a.y.values, b.y.values)
    assert a.panel.weights.shape == (30, 4, 4, 6)
    idx = np.arange(4)
    assert np.all(a.panel.weights[:, idx, idx, :] == 0)


def test_factor_sample_gram_identity():
    d = generate(SyntheticSpec(N=6, m=10, r=3, beta=(0.2, 0.1, 0.1), T=40))
    F3 = np.moveaxis(d.truth.factors, 3, 1).reshape(40, 3, -1)
    np.testing.assert_allclose(np.einsum("tka,tla->kl", F3, F3) / 40, np.eye(3), atol=1e-10)


def test_noiseless_recovery_zero_error():
    d = generate(SyntheticSpec(N=6, m=12, r=2, T=40, noise_scale=0.0))
    est, _ = estimate_factor_model(d.panel, 2)
    assert loading_error(est, d.truth) < 1e-10
    assert factor_error(est, d.truth) < 1e-10


def test_unstable_rejected():
    with pytest.raises(ValueError, match="unstable"):
        generate(SyntheticSpec(N=4, m=6, r=2, T=30, rho=1.2))


def test_loglog_slope():
    assert loglog_slope([1, 2, 4], [1, 0.5, 0.25]) == pytest.approx(-1.0)


def test_doubling_T_ratio():
    err = rate_experiment_prop1(ms=(80,), Ts=(200, 400), reps=12, seed=1)
    ratio = err.loading_error.iloc[1] / err.loading_error.iloc[0]
    assert 0.6 <= ratio <= 0.85


def test_prop1_noiseless_and_reproducible():
    base = SyntheticSpec(N=5, r=2, beta=(0.0, 0.0), nu_scale=0.0, noise_scale=0.0)
    err = rate_experiment_prop1(ms=(10, 20), Ts=(20, 40), reps=2, base=base)
    assert err.loading_error.max() < 1e-10 and err.factor_error.max() < 1e-10
    noisy = SyntheticSpec(N=5, r=2, beta=(0.0, 0.0), nu_scale=0.0)
    a = slope_table(rate_experiment_prop1(ms=(10, 20), Ts=(20, 40), reps=2, base=noisy, seed=3))
    b = slope_table(rate_experiment_prop1(ms=(10, 20), Ts=(20, 40), reps=2, base=noisy, seed=3))
    assert a.equals(b)


def test_prop2_true_factors_exact():
    d = generate(SyntheticSpec(N=8, m=20, r=2, T=100, noise_scale=0.0, nu_scale=0.0))
    np.testing.assert_allclose(fit_ols(d.y, d.truth).theta, d.theta, atol=1e-8)
    est, _ = estimate_factor_model(d.panel, 2)
    s = align_signs(est.loadings, d.truth.loadings)
    np.testing.assert_allclose(fit_ols(d.y, est).theta, np.concatenate([d.beta * s, d.rho, d.alpha]), atol=1e-8)


def test_prop2_large_T_noiseless_weights():
    d = generate(SyntheticSpec(N=4, m=4, r=2, T=60_000, noise_scale=0.0, nu_scale=0.05, seed=2))
    est, _ = estimate_factor_model(d.panel, 2)
    s = align_signs(est.loadings, d.truth.loadings)
    theta_star = np.concatenate([d.beta * s, d.rho, d.alpha])
    assert np.linalg.norm(fit_ols(d.y, est).theta - theta_star) < 1e-3


def test_prop2_gap_shrinks_and_sign_invariance():
    tab = rate_experiment_prop2(cells=((10, 100), (40, 400)), reps=4, base=SyntheticSpec(N=5, r=2, noise_scale=1.0))
    assert tab.estimated_vs_true_gap.iloc[1] < tab.estimated_vs_true_gap.iloc[0]
    d = generate(SyntheticSpec(N=5, m=10, r=2, T=100, noise_scale=0.5, seed=9))
    est, _ = estimate_factor_model(d.panel, 2)
    a = fit_ols(d.y, est).beta
    b = fit_ols(d.y, est.flip(np.array([-1.0, -1.0]))).beta
    np.testing.assert_allclose(np.abs(a), np.abs(b), rtol=1e-10)
