"""Factor network autoregression: design assembly, OLS and SUR estimation.

The model is ``y_t = sum_k beta_k F_{k,t-1} y_{t-1} + P y_{t-1} + alpha + nu_t``
with diagonal ``P = diag(rho)``. Stacking the node equations gives
``y_t = X_t theta + nu_t`` with ``theta = (beta, rho, alpha)``.

Conventions: ``y`` has ``T + 1`` rows (periods ``0..T``) and the factor array
is aligned with it, so equation ``t`` uses ``factors[t - 1]`` and ``y[t - 1]``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .netfactors import FactorModel
from .tensor3 import Tensor3, mat, mode_mul

__all__ = [
    "PanelSeries",
    "FnarFit",
    "RankDeficiencyError",
    "build_design",
    "stacked_designs",
    "fit_ols",
    "fit_sur",
    "fit_heterogeneous",
    "rescale_to_layers",
    "forecast_one_step",
    "simulate_y",
    "dof_divisor",
]

SIGMA_COND_MAX = 1e12


class RankDeficiencyError(np.linalg.LinAlgError):
    """Stacked design lacks full column rank."""

    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(f"design is rank deficient; collinear columns: {', '.join(self.columns)}")


@dataclass
class PanelSeries:
    """Node variables over time, ``values`` of shape ``(T, N)``."""

    periods: list
    values: np.ndarray
    nodes: list = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("values must be a T x N matrix")
        if len(self.periods) != self.values.shape[0]:
            raise ValueError("periods do not match the number of rows")
        if np.isnan(self.values).any():
            raise ValueError("panel series has missing entries")
        if not self.nodes:
            self.nodes = list(range(self.values.shape[1]))

    @property
    def N(self) -> int:
        return self.values.shape[1]

    def head(self, n: int) -> "PanelSeries":
        return PanelSeries(self.periods[:n], self.values[:n], self.nodes)


@dataclass
class FnarFit:
    """Estimated FNAR.

    ``beta`` is length ``r`` for homogeneous fits and ``N x r`` for
    heterogeneous ones; ``std_errors`` mirrors ``theta``.
    """

    mode: str
    estimator: str
    beta: np.ndarray
    rho: np.ndarray
    alpha: np.ndarray
    sigma_nu: np.ndarray
    std_errors: np.ndarray
    residuals: np.ndarray
    fitted: np.ndarray
    cov_theta: np.ndarray = field(repr=False, default=None)
    dof: float = np.nan
    iterations: int = 0

    @property
    def theta(self) -> np.ndarray:
        if self.mode == "homogeneous":
            return np.concatenate([self.beta, self.rho, self.alpha])
        return np.column_stack([self.beta, self.rho, self.alpha]).ravel()

    @property
    def r(self) -> int:
        return self.beta.shape[-1]

    @property
    def N(self) -> int:
        return self.rho.shape[0]

    def names(self) -> list[str]:
        return _names(self.N, self.r, self.mode)

    def transition(self, factors_t: np.ndarray) -> np.ndarray:
        """``sum_k beta_k F_k + P`` for one period's ``(N, N, r)`` factors."""
        if self.mode == "homogeneous":
            net = factors_t @ self.beta
        else:
            net = np.einsum("ijk,ik->ij", factors_t, self.beta)
        return net + np.diag(self.rho)


def _factor_array(model) -> np.ndarray:
    if isinstance(model, FactorModel):
        return model.factors
    if isinstance(model, Tensor3):
        return model.data[None]
    return np.asarray(model, dtype=np.float64)


def _values(y) -> np.ndarray:
    return y.values if isinstance(y, PanelSeries) else np.asarray(y, dtype=np.float64)


def build_design(y_lag, factors_lag) -> np.ndarray:
    """``N x (r + 2N)`` regressor matrix ``(mat_1(F x_2 y'), diag(y), I_N)``."""
    y_lag = np.asarray(y_lag, dtype=np.float64).ravel()
    f = factors_lag if isinstance(factors_lag, Tensor3) else Tensor3(factors_lag)
    N = y_lag.size
    if f.dims[0] != N or f.dims[1] != N:
        raise ValueError(f"factor slices are {f.dims[:2]} but y has length {N}")
    net = mat(mode_mul(f, 2, y_lag[None, :]), 1)  # N x r
    return np.hstack([net, np.diag(y_lag), np.eye(N)])


def network_regressors(y: np.ndarray, factors: np.ndarray) -> np.ndarray:
    """``Z[t-1, i, k] = f'_{k,i,t-1} y_{t-1}`` for ``t = 1..T``, shape ``(T, N, r)``."""
    return np.einsum("tijk,tj->tik", factors[:-1], y[:-1])


def stacked_designs(y, model, mode: str = "homogeneous") -> tuple[np.ndarray, np.ndarray]:
    """Per-period designs ``X`` of shape ``(T, N, p)`` and targets ``(T, N)``."""
    yv = _values(y)
    f = _factor_array(model)
    if f.shape[0] != yv.shape[0]:
        raise ValueError(f"factors cover {f.shape[0]} periods but y has {yv.shape[0]}")
    if f.shape[1] != yv.shape[1]:
        raise ValueError("factor node count does not match y")
    T, N, r = yv.shape[0] - 1, yv.shape[1], f.shape[3]
    if T < 1:
        raise ValueError("need at least two periods of y")
    z = network_regressors(yv, f)
    ylag = yv[:-1]
    eye = np.eye(N)
    if mode == "homogeneous":
        X = np.concatenate(
            [z, ylag[:, :, None] * eye[None], np.broadcast_to(eye, (T, N, N))], axis=2
        )
    elif mode == "heterogeneous":
        p = r + 2
        X = np.zeros((T, N, N * p))
        for i in range(N):
            X[:, i, i * p : i * p + r] = z[:, i, :]
            X[:, i, i * p + r] = ylag[:, i]
            X[:, i, i * p + r + 1] = 1.0
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return X, yv[1:]


def dof_divisor(T: int, r: int, N: int, rule: str = "adjusted") -> float:
    """Residual covariance divisor: ``T - r/N - 2`` (``adjusted``) or ``T``."""
    if rule == "adjusted":
        return T - r / N - 2
    if rule == "T":
        return float(T)
    raise ValueError(f"unknown dof rule {rule!r}")


def _check_rank(X2: np.ndarray, names: list[str]) -> None:
    s = np.linalg.svd(X2, compute_uv=False)
    tol = s.max() * max(X2.shape) * np.finfo(float).eps
    if s.min() > tol:
        return
    _, _, vt = np.linalg.svd(X2, full_matrices=False)
    null = vt[s <= tol]
    involved = np.flatnonzero(np.any(np.abs(null) > 1e-8, axis=0))
    raise RankDeficiencyError([names[j] for j in involved])


def _split(theta, N, r, mode):
    if mode == "homogeneous":
        return theta[:r], theta[r : r + N], theta[r + N :]
    t = theta.reshape(N, r + 2)
    return t[:, :r], t[:, r], t[:, r + 1]


def _gls_solve(X, Y, sigma_inv=None):
    """Stacked (G)LS. Returns ``theta`` and the inverse information matrix."""
    p = X.shape[2]
    X2 = X.reshape(-1, p)
    scale = 1.0
    if sigma_inv is not None and _is_scalar(sigma_inv):
        # spherical errors: GLS is OLS, solved without reweighting
        scale, sigma_inv = float(sigma_inv[0, 0]), None
    SX2 = X2 if sigma_inv is None else np.matmul(sigma_inv, X).reshape(-1, p)
    A = X2.T @ SX2
    b = SX2.T @ Y.ravel()
    A = 0.5 * (A + A.T)
    theta = np.linalg.solve(A, b)
    return theta, np.linalg.inv(A) / scale


def _is_scalar(a: np.ndarray) -> bool:
    return a[0, 0] > 0 and np.array_equal(a, a[0, 0] * np.eye(a.shape[0]))


def _inverse_cov(sigma: np.ndarray) -> np.ndarray:
    N = sigma.shape[0]
    if np.linalg.cond(sigma) > SIGMA_COND_MAX:
        lam = 1e-8 * np.trace(sigma) / N
        sigma = sigma + lam * np.eye(N)
        if not np.isfinite(lam) or lam <= 0 or np.linalg.cond(sigma) > SIGMA_COND_MAX:
            raise np.linalg.LinAlgError("residual covariance is singular beyond regularization")
    return np.linalg.inv(sigma)


def _drop_zero_columns(X, names):
    keep = np.any(X != 0.0, axis=(0, 1))
    if keep.all():
        return X, names, keep
    warnings.warn(
        "identically zero regressors fixed at 0: " + ", ".join(n for n, k in zip(names, keep) if not k),
        stacklevel=3,
    )
    return X[:, :, keep], [n for n, k in zip(names, keep) if k], keep


def _fit(y, model, mode, estimator, max_iter=1, sigma=None, dof_rule="adjusted") -> FnarFit:
    X, Y = stacked_designs(y, model, mode)
    T, N, p = X.shape
    r = _factor_array(model).shape[3]
    names = _names(N, r, mode)
    Xk, kept_names, keep = _drop_zero_columns(X, names) if mode == "heterogeneous" else (X, names, np.ones(p, bool))
    _check_rank(Xk.reshape(T * N, -1), kept_names)
    dof = dof_divisor(T, r, N, dof_rule)

    theta_k, inv_a = _gls_solve(Xk, Y)
    resid = Y - Xk @ theta_k
    sig = resid.T @ resid / dof
    if estimator == "ols":
        # conventional OLS variance allowing cross-node error covariance
        X2 = Xk.reshape(T * N, -1)
        meat = X2.T @ np.matmul(sig, Xk).reshape(T * N, -1)
        cov = inv_a @ meat @ inv_a
        iters = 0
    elif estimator == "sur":
        iters = 0
        for _ in range(max(1, max_iter)):
            s_inv = _inverse_cov(sig if sigma is None else np.asarray(sigma, dtype=np.float64))
            theta_k, cov = _gls_solve(Xk, Y, s_inv)
            resid = Y - Xk @ theta_k
            sig = resid.T @ resid / dof
            iters += 1
            if sigma is not None:
                break
    else:
        raise ValueError(f"unknown estimator {estimator!r}")

    theta = np.zeros(p)
    theta[keep] = theta_k
    full_cov = np.full((p, p), np.nan)
    full_cov[np.ix_(keep, keep)] = cov
    se = np.sqrt(np.clip(np.diag(full_cov), 0.0, None))
    se[~keep] = np.nan
    beta, rho, alpha = _split(theta, N, r, mode)
    return FnarFit(
        mode=mode,
        estimator=estimator.upper(),
        beta=beta,
        rho=rho,
        alpha=alpha,
        sigma_nu=0.5 * (sig + sig.T),
        std_errors=se,
        residuals=resid,
        fitted=Y - resid,
        cov_theta=full_cov,
        dof=dof,
        iterations=iters,
    )


def _names(N, r, mode):
    if mode == "homogeneous":
        return (
            [f"beta_{k + 1}" for k in range(r)]
            + [f"rho_{i + 1}" for i in range(N)]
            + [f"alpha_{i + 1}" for i in range(N)]
        )
    out = []
    for i in range(N):
        out += [f"beta_{k + 1}[{i + 1}]" for k in range(r)] + [f"rho_{i + 1}", f"alpha_{i + 1}"]
    return out


def fit_ols(y, model, dof_rule: str = "adjusted") -> FnarFit:
    """Pooled OLS of the homogeneous FNAR.

    ``model`` is a :class:`FactorModel` or an array of factors
    ``(T + 1, N, N, r)`` aligned with ``y``.

    Raises:
        RankDeficiencyError: naming the collinear design columns.
    """
    return _fit(y, model, "homogeneous", "ols", dof_rule=dof_rule)


def fit_sur(y, model, max_iter: int = 1, sigma=None, dof_rule: str = "adjusted") -> FnarFit:
    """Feasible GLS (SUR) of the homogeneous FNAR.

    The error covariance starts from the OLS residuals and is refreshed
    ``max_iter - 1`` more times. Passing ``sigma`` fixes it instead.
    """
    return _fit(y, model, "homogeneous", "sur", max_iter=max_iter, sigma=sigma, dof_rule=dof_rule)


def fit_heterogeneous(y, model, estimator: str = "sur", max_iter: int = 1, dof_rule: str = "adjusted") -> FnarFit:
    """FNAR with node-specific network coefficients ``beta_{k,i}``.

    Equation ``i`` regresses ``y_{i,t}`` on ``(f'_{k,i,t-1} y_{t-1})_k``,
    ``y_{i,t-1}`` and a constant. With ``estimator="ols"`` this is
    equation-by-equation OLS; ``"sur"`` is joint GLS.
    """
    return _fit(y, model, "heterogeneous", estimator.lower(), max_iter=max_iter, dof_rule=dof_rule)


def simulate_y(factors, beta, rho, alpha, shocks, y0) -> np.ndarray:
    """Run the FNAR recursion from ``y0``; row ``t`` uses ``factors[t-1]``."""
    T = shocks.shape[0]
    y = np.empty((T, len(y0)))
    y[0] = y0
    P = np.diag(rho)
    for t in range(1, T):
        y[t] = (factors[t - 1] @ beta + P) @ y[t - 1] + alpha + shocks[t]
    return y


def rescale_to_layers(fit: FnarFit, model: FactorModel) -> np.ndarray:
    """Layer-level network effects ``U M^{-1} beta`` (length ``m``)."""
    if fit.mode != "homogeneous":
        raise ValueError("layer rescaling needs a homogeneous fit")
    return model.loadings @ (fit.beta / model.eigenvalues)


def forecast_one_step(fit: FnarFit, model, y_T, factors_T=None) -> np.ndarray:
    """``(sum_k beta_k F_{k,T} + P) y_T + alpha``.

    ``factors_T`` defaults to the last period of ``model``.
    """
    if factors_T is None:
        factors_T = _factor_array(model)[-1]
    f = np.asarray(factors_T.data if isinstance(factors_T, Tensor3) else factors_T, dtype=np.float64)
    y_T = np.asarray(y_T, dtype=np.float64)
    return fit.transition(f) @ y_T + fit.alpha
