"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` (or ``python
tests/test_acceptance.py``). The Monte Carlo criteria take a few minutes.
"""

import time
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from fnar.bootstrap import run_bootstrap
from fnar.cli import main
from fnar.estimation import fit_ols, fit_sur
from fnar.forecastlab import WindowPlan, diebold_mariano, fit_lasso_var, fit_minnesota_bvar, run_comparison
from fnar.montecarlo import SyntheticSpec, generate
from fnar.netfactors import align_signs, estimate_factor_model, factor_row_sums, variance_explained
from fnar.netweights import fill_missing_series, normalize_rows
from fnar.tensor3 import Tensor3, mat, mode_mul
from oracles import ols_with_intercept, stacked_ols

DATA = Path(__file__).parent / "data"


def verdict(capsys, n, title, checks: dict, detail=""):
    ok = all(bool(v) for v in checks.values())
    failed = [k for k, v in checks.items() if not v]
    line = f"criterion {n:2d} [{'PASS' if ok else 'FAIL'}] {title}"
    if detail:
        line += f" | {detail}"
    if failed:
        line += f" | failed: {', '.join(failed)}"
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


def test_c01_worked_example_exactness(capsys):
    t0 = time.perf_counter()
    t = Tensor3.from_slices([[[1, 4, 7, 10], [2, 5, 8, 11], [3, 6, 9, 12]], [[13, 16, 19, 22], [14, 17, 20, 23], [15, 18, 21, 24]]])
    m1 = [[1, 4, 7, 10, 13, 16, 19, 22], [2, 5, 8, 11, 14, 17, 20, 23], [3, 6, 9, 12, 15, 18, 21, 24]]
    m2 = [[1, 2, 3, 13, 14, 15], [4, 5, 6, 16, 17, 18], [7, 8, 9, 19, 20, 21], [10, 11, 12, 22, 23, 24]]
    m3 = [list(range(1, 13)), list(range(13, 25))]
    exact = all(np.array_equal(mat(t, q), w) for q, w in zip((1, 2, 3), (m1, m2, m3)))
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(200):
        d = rng.integers(1, 5, size=3)
        p = rng.integers(1, 5, size=3)
        x = rng.standard_normal(d)
        ys = [rng.standard_normal((p[k], d[k])) for k in range(3)]
        z = mode_mul(mode_mul(mode_mul(x, 1, ys[0]), 2, ys[1]), 3, ys[2])
        for q in (1, 2, 3):
            o = [ys[k] for k in range(3) if k != q - 1]
            want = ys[q - 1] @ mat(x, q) @ np.kron(o[1], o[0]).T
            worst = max(worst, np.linalg.norm(mat(z, q) - want) / max(np.linalg.norm(want), 1e-300))
    elapsed = time.perf_counter() - t0
    verdict(
        capsys, 1, "worked 3x4x2 example unfoldings and Kronecker identities",
        {"printed matrices": exact, "identity rel err < 1e-12": worst < 1e-12, "runtime < 1 s": elapsed < 1.0},
        f"max rel err {worst:.2e}, {elapsed:.2f}s",
    )


def test_c02_factor_recovery(capsys):
    checks, worst = {}, {}
    for r, beta in ((1, (0.5,)), (3, (0.4, -0.3, 0.2))):
        d = generate(SyntheticSpec(N=10, m=20, r=r, T=60, noise_scale=0.0, beta=beta, seed=r))
        est, _ = estimate_factor_model(d.panel, r)
        w = d.panel.weights
        rec = np.linalg.norm(est.reconstruct() - w) / np.linalg.norm(w)
        total, _ = variance_explained(d.panel, est)
        s = align_signs(est.loadings, d.truth.loadings)
        ferr = np.max(np.abs(est.factors * s - d.truth.factors))
        checks[f"r={r} reconstruction < 1e-8"] = rec < 1e-8
        checks[f"r={r} variance total 1 +- 1e-10"] = abs(total - 1) <= 1e-10
        checks[f"r={r} factors equal up to sign"] = ferr < 1e-8
        worst[r] = (rec, total, ferr)
    detail = "; ".join(f"r={r}: rec {a:.1e}, total-1 {b - 1:.1e}, factor {c:.1e}" for r, (a, b, c) in worst.items())
    verdict(capsys, 2, "noiseless factor recovery (N=10, m=20)", checks, detail)


@pytest.fixture(scope="module")
def simulate_outputs(tmp_path_factory):
    out = tmp_path_factory.mktemp("simulate")
    t0 = time.perf_counter()
    code = main(["simulate", "--out", str(out)])  # default grids, 50 reps
    return code, out, time.perf_counter() - t0


def test_c03_loading_error_rates(capsys, simulate_outputs):
    code, out, elapsed = simulate_outputs
    errs = pd.read_csv(out / "prop1_errors.csv")
    slopes = pd.read_csv(out / "prop1_slopes.csv")
    s80 = slopes.query("error == 'loading_error' and axis == 'T' and fixed == 80").slope.iloc[0]
    mono = all(np.all(np.diff(g.sort_values("m").factor_error) < 0) for _, g in errs.groupby("T"))
    verdict(
        capsys, 3, "loading-error rate in T and factor error decreasing in m",
        {"exit 0": code == 0, "slope at m=80 in [-0.65,-0.35]": -0.65 <= s80 <= -0.35, "factor error monotone in m": mono,
         "runtime < 10 min (prop 1 and 2 together)": elapsed < 600},
        f"slope {s80:.3f}, {elapsed:.0f}s",
    )


def test_c04_theta_consistency(capsys, simulate_outputs):
    _, out, _ = simulate_outputs
    tab = pd.read_csv(out / "prop2_errors.csv")
    dec = bool(np.all(np.diff(tab.theta_error) < 0))
    d = generate(SyntheticSpec(N=8, m=20, r=2, T=200, noise_scale=0.0, nu_scale=0.0, seed=0))
    exact = np.max(np.abs(fit_ols(d.y, d.truth).theta - d.theta))
    verdict(
        capsys, 4, "theta error decreasing along (m,T); exact recovery without noise",
        {"strictly decreasing": dec, "true factors, zero noise to 1e-8": exact < 1e-8},
        f"median errors {', '.join(f'{v:.4f}' for v in tab.theta_error)}; exact err {exact:.1e}",
    )


def test_c05_ols_sur_oracles(capsys):
    worst = 0.0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        N, r, T = int(rng.integers(2, 6)), int(rng.integers(1, 4)), int(rng.integers(30, 80))
        f = rng.standard_normal((T, N, N, r)) / N * (~np.eye(N, dtype=bool))[None, :, :, None]
        y = rng.standard_normal((T, N))
        want, _, _ = stacked_ols(y, f)
        got = fit_ols(y, f).theta
        worst = max(worst, np.max(np.abs(got - want) / np.maximum(np.abs(want), 1e-12)))
    y, f = rng.standard_normal((60, 4)), rng.standard_normal((60, 4, 4, 2)) * (~np.eye(4, dtype=bool))[None, :, :, None]
    spherical = np.array_equal(fit_sur(y, f, sigma=2.5 * np.eye(4)).theta, fit_ols(y, f).theta)
    b_ols, b_sur = [], []
    base = SyntheticSpec(N=6, m=10, r=2, T=120, noise_scale=0.0, nu_corr=0.9)
    for rep in range(200):
        d = generate(base, np.random.default_rng([55, rep]))
        b_ols.append(fit_ols(d.y, d.truth).beta[0])
        b_sur.append(fit_sur(d.y, d.truth).beta[0])
    v_ols, v_sur = np.var(b_ols), np.var(b_sur)
    verdict(
        capsys, 5, "OLS normal equations, spherical SUR, SUR efficiency",
        {"OLS rel err < 1e-8": worst < 1e-8, "spherical SUR == OLS": spherical, "var SUR <= var OLS": v_sur <= v_ols},
        f"max rel err {worst:.1e}; var(beta1) OLS {v_ols:.2e} vs SUR {v_sur:.2e}",
    )


def test_c06_rescaling_identity(capsys):
    from fnar.estimation import rescale_to_layers

    d = generate(SyntheticSpec(N=8, m=15, r=2, T=100, noise_scale=0.3, seed=1))
    est, _ = estimate_factor_model(d.panel, 2)
    fit = fit_ols(d.y, est)
    b = rescale_to_layers(fit, est)
    w_hat = est.reconstruct()
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        yv = rng.standard_normal(8)
        t = int(rng.integers(0, 100))
        lhs = mode_mul(mode_mul(w_hat[t], 2, yv[None]), 3, b[None]).data
        rhs = mode_mul(mode_mul(est.factors[t], 2, yv[None]), 3, fit.beta[None]).data
        worst = max(worst, np.max(np.abs(lhs - rhs)))
    verdict(capsys, 6, "layer rescaling identity", {"max abs diff < 1e-10": worst < 1e-10}, f"max diff {worst:.1e}")


def test_c07_normalization(capsys):
    rng = np.random.default_rng(7)
    T, N, m = 40, 8, 12
    w, _ = normalize_rows(rng.uniform(0, 1, (T, N, N, m)) ** 3)
    est, _ = estimate_factor_model(w, 4)
    rss = float(np.sum(est.factors**2, axis=2).mean())
    _, avg_abs = factor_row_sums(est)
    idx = np.arange(N)
    verdict(
        capsys, 7, "factor normalization invariants",
        {
            "avg row sum of squares = 1/N +- 1e-8": abs(rss - 1 / N) <= 1e-8,
            "avg abs row sum in [1/sqrt(N), 1]": bool(np.all((avg_abs >= 1 / np.sqrt(N)) & (avg_abs <= 1))),
            "zero diagonals exact": bool(np.all(est.factors[:, idx, idx, :] == 0.0)),
        },
        f"rss {rss:.10f} (1/N={1 / N}), avg abs {np.round(avg_abs, 3).tolist()}",
    )


def test_c08_bootstrap(capsys):
    t0 = time.perf_counter()
    d = generate(SyntheticSpec(N=5, m=8, r=2, T=60, noise_scale=0.0, nu_scale=0.0, seed=1))
    est, _ = estimate_factor_model(d.panel, 2)
    fit = fit_ols(d.y, est)
    fit.sigma_nu = np.zeros_like(fit.sigma_nu)
    deg = run_bootstrap(d.panel, d.y, est, fit, B=10, seed=0)
    collapse = np.max(np.abs(deg.draws - fit.theta))
    lo, hi = deg.intervals
    d2 = generate(SyntheticSpec(N=5, m=8, r=2, T=60, noise_scale=0.3, seed=2))
    est2, _ = estimate_factor_model(d2.panel, 2)
    fit2 = fit_ols(d2.y, est2)
    repro = np.array_equal(
        run_bootstrap(d2.panel, d2.y, est2, fit2, B=20, seed=3).draws,
        run_bootstrap(d2.panel, d2.y, est2, fit2, B=20, seed=3).draws,
    )
    spec = SyntheticSpec(N=6, m=20, r=2, T=100, noise_scale=0.1)
    hits = 0
    for rep in range(100):
        dd = generate(spec, np.random.default_rng([2024, rep]))
        e, _ = estimate_factor_model(dd.panel, 2)
        s = align_signs(e.loadings, dd.truth.loadings)
        res = run_bootstrap(dd.panel, dd.y, e, fit_ols(dd.y, e), B=500, seed=rep)
        a, b = res.intervals[:, 0]
        hits += a <= dd.beta[0] * s[0] <= b
    elapsed = time.perf_counter() - t0
    verdict(
        capsys, 8, "bootstrap degenerate case, reproducibility, coverage",
        {
            "degenerate draws == point estimate": collapse < 1e-9 and np.max(hi - lo) < 1e-9,
            "fixed seed bit-identical": repro,
            "coverage >= 88%": hits >= 88,
            "runtime < 20 min": elapsed < 1200,
        },
        f"coverage {hits}/100, degenerate dev {collapse:.1e}, {elapsed:.0f}s",
    )


def test_c09_forecast_lab(capsys):
    d = generate(SyntheticSpec(N=8, m=20, r=2, T=300, noise_scale=0.5, seed=0))
    est, _ = estimate_factor_model(d.panel, 2)
    rep = run_comparison(d.y, est, WindowPlan.last_n(300, 60))
    med = float(rep.mse_ratios()["fnar"].median())
    Y = d.y.values[:120]
    lasso = fit_lasso_var(Y, lam=1e8)
    collapse = np.all(lasso.coef == 0) and np.allclose(lasso.intercept, Y[1:].mean(axis=0), rtol=1e-12, atol=0)
    bvar = fit_minnesota_bvar(Y, tightness=1e7)
    ols = np.array([ols_with_intercept(Y[:-1], Y[1:, i]) for i in range(8)])
    bdiff = np.max(np.abs(bvar.params - ols))
    rng = np.random.default_rng(9)
    rej = np.mean([diebold_mariano(*rng.standard_normal((2, 60))).p_value < 0.05 for _ in range(500)])
    verdict(
        capsys, 9, "forecast lab",
        {
            "FNAR median MSE ratio < 1": med < 1,
            "LASSO lambda->inf gives intercepts": bool(collapse),
            "BVAR tightness->inf == OLS to 1e-6": bdiff < 1e-6,
            "DM size in [2%, 9%]": 0.02 <= rej <= 0.09,
        },
        f"median ratio {med:.3f}, BVAR-OLS {bdiff:.1e}, DM size {rej:.3f}",
    )


def test_c10_ingestion_golden(capsys, tmp_path):
    import yaml

    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(yaml.safe_dump({"ingest": {"nodes": ["A", "B", "C"], "layers": ["trade", "fin"]}}))
    code = main(["ingest", "--config", str(cfg), "--flows", str(DATA / "golden_flows.csv"), "--out", str(tmp_path / "o")])
    golden = code == 0 and (tmp_path / "o" / "panel.csv").read_bytes() == (DATA / "golden_panel.csv").read_bytes()
    a = fill_missing_series([5, np.nan, np.nan, 7]).tolist()
    b = fill_missing_series([np.nan, 3]).tolist()
    verdict(
        capsys, 10, "ingestion golden file and missing-value rules",
        {"golden panel byte-identical": golden, "[5,_,_,7] -> [5,5,5,7]": a == [5, 5, 5, 7], "[_,3] -> [3,3]": b == [3, 3]},
    )


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
