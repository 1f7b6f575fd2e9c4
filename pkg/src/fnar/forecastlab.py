"""Recursive pseudo-out-of-sample comparison of the FNAR with standard baselines.

Baselines: per-node AR(1), principal-component AR, LASSO VAR with
time-block cross-validation, and a Minnesota-prior BVAR. Every model is
re-fit on an expanding window and forecasts one step ahead. The factor
series is the full-sample extraction, held fixed across windows.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from numba import njit
from scipy import stats

from .estimation import FnarFit, _factor_array, _values, fit_heterogeneous, fit_ols, fit_sur

__all__ = [
    "WindowPlan",
    "ForecastReport",
    "DMResult",
    "fit_ar1",
    "fit_pc_ar",
    "fit_lasso_var",
    "lasso_cd",
    "fit_minnesota_bvar",
    "diebold_mariano",
    "run_comparison",
    "MODELS",
]

MODELS = ("ar1", "pc_ar", "lasso_var", "bvar", "fnar")


@dataclass(frozen=True)
class WindowPlan:
    """Expanding windows ending at ``first_end..last_end`` (0-based row indices).

    Window ``e`` trains on rows ``0..e`` and forecasts row ``e + 1``.
    """

    first_end: int
    last_end: int
    step: int = 1
    horizon: int = 1

    def __post_init__(self):
        if self.step != 1 or self.horizon != 1:
            raise ValueError("only one-step recursive windows are supported")
        if self.last_end < self.first_end:
            raise ValueError("last_end precedes first_end")

    def ends(self) -> range:
        return range(self.first_end, self.last_end + 1, self.step)

    @classmethod
    def last_n(cls, T: int, n: int) -> "WindowPlan":
        """The last ``n`` one-step forecasts of a sample with ``T`` rows."""
        return cls(T - 1 - n, T - 2)


@dataclass
class ForecastReport:
    """Per-node squared forecast errors and derived comparisons."""

    nodes: list
    models: list
    targets: list
    sq_errors: dict
    forecasts: dict = field(repr=False, default_factory=dict)
    plan: WindowPlan | None = None
    benchmark: str = "ar1"
    reference: str = "fnar"
    dm_lags: int = 0

    def mse(self) -> pd.DataFrame:
        return pd.DataFrame({m: self.sq_errors[m].mean(axis=0) for m in self.models}, index=self.nodes)

    def mse_ratios(self) -> pd.DataFrame:
        mse = self.mse()
        return mse.div(mse[self.benchmark], axis=0)

    def dm_table(self) -> pd.DataFrame:
        """DM tests of the reference model against every other model, per node."""
        rows = []
        if self.reference not in self.models:
            return pd.DataFrame(rows)
        for other in self.models:
            if other == self.reference:
                continue
            for i, node in enumerate(self.nodes):
                res = diebold_mariano(
                    np.sqrt(self.sq_errors[self.reference][:, i]),
                    np.sqrt(self.sq_errors[other][:, i]),
                    lags=self.dm_lags,
                )
                rows.append(
                    dict(node=node, model=other, statistic=res.statistic, p_value=res.p_value, defined=res.defined)
                )
        return pd.DataFrame(rows)


# --------------------------------------------------------------- baselines


def fit_ar1(series) -> tuple[float, float]:
    """OLS of ``y_t`` on ``(1, y_{t-1})``; returns ``(rho, alpha)``.

    A constant series falls back to ``rho = 0`` and ``alpha`` equal to the
    mean, with a warning.
    """
    y = np.asarray(series, dtype=np.float64).ravel()
    if y.size < 3:
        raise ValueError("AR(1) needs at least three observations")
    x, z = y[:-1], y[1:]
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx <= 1e-14 * max(1.0, float(x @ x)):
        warnings.warn("constant series; AR(1) falls back to the mean forecast", stacklevel=2)
        return 0.0, float(y.mean())
    rho = float(xc @ (z - z.mean())) / sxx
    return rho, float(z.mean() - rho * x.mean())


def _pc_basis(Y: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    mu = Y.mean(axis=0)
    cov = np.cov(Y, rowvar=False).reshape(Y.shape[1], Y.shape[1])
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(-vals, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    if k and vals[k - 1] <= 1e-12 * max(vals[0], 1e-300):
        raise ValueError(f"covariance rank is below {k}")
    vecs = vecs[:, :k]
    return mu, vecs * np.where(vecs[np.argmax(np.abs(vecs), axis=0), range(k)] < 0, -1.0, 1.0)


@dataclass
class PCARFit:
    mean: np.ndarray
    components: np.ndarray
    coef: np.ndarray  # N x (2 + k): const, own lag, PCs

    def scores(self, y_t) -> np.ndarray:
        return (np.asarray(y_t) - self.mean) @ self.components

    def forecast(self, y_T) -> np.ndarray:
        y_T = np.asarray(y_T, dtype=np.float64)
        return self.coef[:, 0] + self.coef[:, 1] * y_T + self.coef[:, 2:] @ self.scores(y_T)


def fit_pc_ar(Y, n_components: int = 4) -> PCARFit:
    """Each node on a constant, its own lag and lagged principal components.

    Components come from the training block's covariance matrix.
    """
    Y = np.asarray(Y, dtype=np.float64)
    T, N = Y.shape
    if T <= n_components + 2:
        raise ValueError("training window too short for the PC-AR model")
    mu, comps = _pc_basis(Y, n_components)
    pcs = (Y - mu) @ comps
    coef = np.empty((N, 2 + n_components))
    for i in range(N):
        X = np.column_stack([np.ones(T - 1), Y[:-1, i], pcs[:-1]])
        coef[i] = np.linalg.lstsq(X, Y[1:, i], rcond=None)[0]
    return PCARFit(mu, comps, coef)


@njit(cache=True)
def _cd_path(G, c, lams, w, tol, max_iter):
    """Covariance-form coordinate descent along a decreasing penalty path."""
    p = G.shape[0]
    out = np.empty((lams.shape[0], p))
    for g in range(lams.shape[0]):
        lam = lams[g]
        for _ in range(max_iter):
            max_step = 0.0
            max_w = 1.0
            for j in range(p):
                if G[j, j] == 0.0:
                    w[j] = 0.0
                    continue
                old = w[j]
                rho = c[j] - G[j] @ w + G[j, j] * old
                if rho > lam:
                    new = (rho - lam) / G[j, j]
                elif rho < -lam:
                    new = (rho + lam) / G[j, j]
                else:
                    new = 0.0
                w[j] = new
                step = abs(new - old)
                if step > max_step:
                    max_step = step
                if abs(new) > max_w:
                    max_w = abs(new)
            if max_step <= tol * max_w:
                break
        out[g] = w
    return out


def _moments(X, y):
    n = X.shape[0]
    xm, ym = X.mean(axis=0), y.mean()
    Xc, yc = X - xm, y - ym
    return Xc.T @ Xc / n, Xc.T @ yc / n, xm, ym


def lasso_cd(X, y, lam: float, tol: float = 1e-7, max_iter: int = 100_000, w0=None) -> tuple[float, np.ndarray]:
    """Coordinate descent for ``(1/2n)||y - b0 - X w||^2 + lam ||w||_1``.

    The intercept is unpenalized. A sweep stops the solve once the largest
    coordinate update, relative to the largest coefficient (at least 1),
    is below ``tol``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    G, c, xm, ym = _moments(X, y)
    w = np.zeros(X.shape[1]) if w0 is None else np.array(w0, dtype=np.float64)
    w = _cd_path(G, c, np.array([float(lam)]), w, tol, max_iter)[0]
    return float(ym - xm @ w), w


@dataclass
class LassoVARFit:
    intercept: np.ndarray
    coef: np.ndarray  # N x N, row i is equation i
    lambdas: np.ndarray

    def forecast(self, y_T) -> np.ndarray:
        return self.intercept + self.coef @ np.asarray(y_T, dtype=np.float64)

    @property
    def params(self) -> np.ndarray:
        """``N x (N + 1)``: intercept then slopes."""
        return np.column_stack([self.intercept, self.coef])


def _lambda_grid(X, y, n: int = 50, ratio: float = 1e-3) -> np.ndarray:
    lmax = np.max(np.abs((X - X.mean(0)).T @ (y - y.mean()))) / len(y)
    if lmax <= 0:
        return np.array([0.0])
    return np.geomspace(lmax, lmax * ratio, n)


def _contiguous_folds(n: int, k: int) -> list[np.ndarray]:
    return [f for f in np.array_split(np.arange(n), k) if f.size]


def fit_lasso_var(Y, cv_folds: int = 10, lam=None, n_lambdas: int = 50) -> LassoVARFit:
    """Equation-by-equation LASSO VAR(1).

    ``lam=None`` selects each equation's penalty by ``cv_folds``-fold
    cross-validation over contiguous time blocks; a scalar fixes it.
    """
    Y = np.asarray(Y, dtype=np.float64)
    X, Z = Y[:-1], Y[1:]
    n, N = X.shape
    if lam is None and n < cv_folds + 2:
        raise ValueError("training window too short for the requested CV folds")
    intercepts, coef, lams = np.empty(N), np.empty((N, N)), np.empty(N)
    for i in range(N):
        if lam is None:
            grid = _lambda_grid(X, Z[:, i], n_lambdas)
            cv = np.zeros(len(grid))
            for fold in _contiguous_folds(n, cv_folds):
                train = np.setdiff1d(np.arange(n), fold)
                if train.size < 2:
                    raise ValueError("degenerate CV fold")
                G, c, xm, ym = _moments(X[train], Z[train, i])
                path = _cd_path(G, c, grid, np.zeros(N), 1e-7, 100_000)
                b0 = ym - path @ xm
                pred = b0[None, :] + X[fold] @ path.T
                cv += np.sum((Z[fold, i][:, None] - pred) ** 2, axis=0)
            li = grid[int(np.argmin(cv))]
        else:
            li = float(lam)
        intercepts[i], coef[i] = lasso_cd(X, Z[:, i], li)
        lams[i] = li
    return LassoVARFit(intercepts, coef, lams)


@dataclass
class BVARFit:
    intercept: np.ndarray
    coef: np.ndarray  # N x N
    sigma: np.ndarray  # AR residual std per node

    def forecast(self, y_T) -> np.ndarray:
        return self.intercept + self.coef @ np.asarray(y_T, dtype=np.float64)

    @property
    def params(self) -> np.ndarray:
        return np.column_stack([self.intercept, self.coef])


def _ar_sigma(y: np.ndarray) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rho, alpha = fit_ar1(y)
    e = y[1:] - alpha - rho * y[:-1]
    return float(np.sqrt(e @ e / max(len(e) - 2, 1)))


def fit_minnesota_bvar(
    Y, tightness: float = 0.1, cross_weight: float = 1.0, prior_own_mean: float = 0.0
) -> BVARFit:
    """Posterior mean of a VAR(1) under a Minnesota prior, equation by equation.

    Slope on ``y_j`` in equation ``i`` has prior mean ``prior_own_mean``
    (``i == j``) or 0, and prior standard deviation ``tightness`` (own) or
    ``tightness * cross_weight * sigma_i / sigma_j`` (cross), with
    ``sigma`` the residual scale of univariate AR(1) fits. The intercept
    prior is flat and the residual variance of equation ``i`` is fixed at
    ``sigma_i^2``.
    """
    Y = np.asarray(Y, dtype=np.float64)
    T, N = Y.shape
    if T <= N + 2:
        raise ValueError("training window too short for the BVAR")
    sig = np.array([_ar_sigma(Y[:, i]) for i in range(N)])
    if np.any(sig <= 0):
        raise ValueError("a node has zero AR residual variance")
    X = np.column_stack([np.ones(T - 1), Y[:-1]])
    XtX = X.T @ X
    intercept, coef = np.empty(N), np.empty((N, N))
    for i in range(N):
        z = Y[1:, i]
        prior_mean = np.zeros(N)
        prior_mean[i] = prior_own_mean
        if tightness == 0.0:
            b0 = np.mean(z - Y[:-1] @ prior_mean)
            intercept[i], coef[i] = b0, prior_mean
            continue
        sd = tightness * cross_weight * sig[i] / sig
        sd[i] = tightness
        prec = np.zeros(N + 1)
        prec[1:] = 1.0 / sd**2
        A = XtX / sig[i] ** 2 + np.diag(prec)
        rhs = X.T @ z / sig[i] ** 2 + np.concatenate([[0.0], prec[1:] * prior_mean])
        b = np.linalg.solve(A, rhs)
        intercept[i], coef[i] = b[0], b[1:]
    return BVARFit(intercept, coef, sig)


@dataclass(frozen=True)
class DMResult:
    statistic: float
    p_value: float
    mean_differential: float
    defined: bool


def diebold_mariano(errors_a, errors_b, lags: int = 0) -> DMResult:
    """Diebold-Mariano test of equal squared-error accuracy.

    The differential is ``e_a^2 - e_b^2``, so a negative statistic favors
    ``a``. The long-run variance uses Bartlett weights up to ``lags``
    (lag 0 by default). A zero-variance differential makes the test
    undefined: identical losses give ``p = 1``, a constant nonzero gap
    gives an infinite statistic with ``p = 0``.
    """
    a = np.asarray(errors_a, dtype=np.float64)
    b = np.asarray(errors_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("error series differ in length")
    n = a.size
    if n < 10:
        raise ValueError("Diebold-Mariano needs at least 10 forecast errors")
    d = a**2 - b**2
    dbar = float(d.mean())
    dc = d - dbar
    lrv = float(dc @ dc) / n
    for k in range(1, lags + 1):
        lrv += 2.0 * (1.0 - k / (lags + 1)) * float(dc[k:] @ dc[:-k]) / n
    if lrv <= 1e-15 * max(1.0, float(np.mean(d**2))):
        if dbar == 0.0 or abs(dbar) <= 1e-15 * max(1.0, float(np.mean(a**2))):
            return DMResult(0.0, 1.0, dbar, False)
        return DMResult(math.copysign(math.inf, dbar), 0.0, dbar, False)
    stat = dbar / math.sqrt(lrv / n)
    return DMResult(stat, float(2.0 * stats.norm.sf(abs(stat))), dbar, True)


# ------------------------------------------------------------------ harness


def _fnar_forecaster(estimator: str, heterogeneous: bool):
    def fit_and_forecast(Y, F):
        if heterogeneous:
            fit = fit_heterogeneous(Y, F, estimator=estimator)
        elif estimator == "sur":
            fit = fit_sur(Y, F)
        else:
            fit = fit_ols(Y, F)
        return fit.transition(F[-1]) @ Y[-1] + fit.alpha

    return fit_and_forecast


def _forecaster(name: str, cfg: dict):
    if name == "ar1":

        def run(Y, F):
            out = np.empty(Y.shape[1])
            for i in range(Y.shape[1]):
                rho, alpha = fit_ar1(Y[:, i])
                out[i] = alpha + rho * Y[-1, i]
            return out

        return run
    if name == "pc_ar":
        k = cfg.get("n_components", 4)
        return lambda Y, F: fit_pc_ar(Y, k).forecast(Y[-1])
    if name == "lasso_var":
        folds = cfg.get("cv_folds", 10)
        return lambda Y, F: fit_lasso_var(Y, folds, lam=cfg.get("lam")).forecast(Y[-1])
    if name == "bvar":
        kw = {k: cfg[k] for k in ("tightness", "cross_weight", "prior_own_mean") if k in cfg}
        return lambda Y, F: fit_minnesota_bvar(Y, **kw).forecast(Y[-1])
    if name == "fnar":
        return _fnar_forecaster(cfg.get("estimator", "sur"), False)
    if name == "fnar_het":
        return _fnar_forecaster(cfg.get("estimator", "sur"), True)
    raise ValueError(f"unknown model {name!r}")


class _Audit:
    """Records the latest row each fit could see; enforces no lookahead."""

    def __init__(self):
        self.max_seen: dict = {}

    def check(self, model, end, Y, F, target):
        if Y.shape[0] != end + 1 or (F is not None and F.shape[0] != end + 1):
            raise AssertionError(f"{model} saw data beyond row {end}")
        if target <= end:
            raise AssertionError("forecast target lies inside the training window")
        self.max_seen[(model, end)] = end


def run_comparison(
    y,
    model=None,
    plan: WindowPlan | None = None,
    models=MODELS,
    configs: dict | None = None,
    benchmark: str = "ar1",
    reference: str = "fnar",
    dm_lags: int = 0,
) -> ForecastReport:
    """Recursive one-step forecasts of each model; squared errors per node.

    ``model`` is a :class:`FactorModel` (or factor array) aligned with
    ``y``; it is required for the FNAR variants. Models are evaluated in a
    canonical (sorted) order, so the report does not depend on the order of
    ``models``.
    """
    Yall = _values(y)
    T, N = Yall.shape
    F = None if model is None else _factor_array(model)
    if F is not None and F.shape[0] != T:
        raise ValueError("factor series must cover the same periods as y")
    plan = plan or WindowPlan.last_n(T, min(60, T // 3))
    if plan.first_end < 2 or plan.last_end + 1 >= T:
        raise ValueError("forecast windows fall outside the sample")
    configs = configs or {}
    models = sorted(set(models), key=list(models).index)
    if benchmark not in models:
        models = [benchmark] + models
    canonical = sorted(models)
    audit = _Audit()
    ends = list(plan.ends())
    sq = {m: np.empty((len(ends), N)) for m in canonical}
    fc = {m: np.empty((len(ends), N)) for m in canonical}
    for name in canonical:
        if name.startswith("fnar") and F is None:
            raise ValueError("FNAR forecasts need a factor model")
        run = _forecaster(name, configs.get(name, {}))
        for w, e in enumerate(ends):
            Ytr = Yall[: e + 1].copy()
            Ftr = None if F is None else F[: e + 1]
            audit.check(name, e, Ytr, Ftr, e + 1)
            try:
                pred = run(Ytr, Ftr)
            except (ValueError, np.linalg.LinAlgError) as exc:
                raise ValueError(f"{name} failed on window ending at row {e}: {exc}") from exc
            fc[name][w] = pred
            sq[name][w] = (Yall[e + 1] - pred) ** 2
    nodes = list(y.nodes) if hasattr(y, "nodes") else list(range(N))
    targets = [e + 1 for e in ends]
    if hasattr(y, "periods"):
        targets = [y.periods[t] for t in targets]
    return ForecastReport(nodes, models, targets, sq, fc, plan, benchmark, reference, dm_lags)
