"""Synthetic FNAR data and Monte Carlo convergence experiments.

Factors have i.i.d. Gaussian off-diagonal entries and are orthonormalized in
sample so that ``(1/T) sum_t F3_t F3_t' = I_r``. Loadings have orthogonal
columns with ``U'U = m * diag(h)`` for distinct ``h``, so the population
eigenvectors of the common component are exactly the normalized loading
columns. Generated weights have zero diagonals but are not row-normalized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .estimation import PanelSeries, fit_ols, simulate_y
from .netfactors import FactorModel, align_signs, estimate_factor_model
from .netweights import WeightPanel

__all__ = [
    "SyntheticSpec",
    "SyntheticData",
    "generate",
    "loading_error",
    "factor_error",
    "loglog_slope",
    "rate_experiment_prop1",
    "rate_experiment_prop2",
    "slope_table",
]


@dataclass(frozen=True)
class SyntheticSpec:
    """Design of one synthetic FNAR data set.

    ``T`` is the number of periods of both the weight tensors and ``y``.
    ``layer_corr`` is the AR(1) correlation of the idiosyncratic weight
    noise across the layer index; ``nu_corr`` is the equicorrelation of the
    FNAR shocks.
    """

    N: int = 8
    m: int = 20
    r: int = 2
    T: int = 200
    noise_scale: float = 0.1
    layer_corr: float = 0.0
    beta: tuple = (0.8, -0.5)
    rho: float | tuple = 0.3
    alpha: float | tuple = 0.5
    nu_scale: float = 1.0
    nu_corr: float = 0.0
    loading_spread: tuple = (2.0, 1.0)
    seed: int = 0

    def theta(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        beta = np.broadcast_to(np.asarray(self.beta, dtype=np.float64), (self.r,)).copy()
        rho = np.broadcast_to(np.asarray(self.rho, dtype=np.float64), (self.N,)).copy()
        alpha = np.broadcast_to(np.asarray(self.alpha, dtype=np.float64), (self.N,)).copy()
        return beta, rho, alpha

    def loading_scales(self) -> np.ndarray:
        if self.r == 1:
            return np.array([self.loading_spread[0]])
        return np.linspace(self.loading_spread[0], self.loading_spread[1], self.r)

    def nu_cov(self) -> np.ndarray:
        c = np.full((self.N, self.N), self.nu_corr)
        np.fill_diagonal(c, 1.0)
        return self.nu_scale**2 * c


@dataclass
class SyntheticData:
    panel: WeightPanel
    y: PanelSeries
    truth: FactorModel
    beta: np.ndarray
    rho: np.ndarray
    alpha: np.ndarray
    common: np.ndarray = field(repr=False, default=None)

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([self.beta, self.rho, self.alpha])


def _offdiag_mask(N: int) -> np.ndarray:
    return ~np.eye(N, dtype=bool)


def _orthonormal_factors(rng, T, N, r) -> np.ndarray:
    f = rng.standard_normal((T, N, N, r)) * _offdiag_mask(N)[None, :, :, None]
    gram = np.einsum("tijk,tijl->kl", f, f) / T
    vals, vecs = np.linalg.eigh(gram)
    inv_root = vecs @ np.diag(vals**-0.5) @ vecs.T
    return f @ inv_root  # inv_root is symmetric


def _loadings(rng, m, scales) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((m, len(scales))))
    return q * np.sqrt(m * scales)


def _layer_noise(rng, T, N, m, scale, corr) -> np.ndarray:
    z = rng.standard_normal((T, N, N, m))
    if corr:
        e = np.empty_like(z)
        e[..., 0] = z[..., 0]
        a = math.sqrt(1.0 - corr**2)
        for k in range(1, m):
            e[..., k] = corr * e[..., k - 1] + a * z[..., k]
        z = e
    return z * (scale / N) * _offdiag_mask(N)[None, :, :, None]


def _check_stable(transitions: np.ndarray) -> None:
    mean_b = transitions.mean(axis=0)
    if np.max(np.abs(np.linalg.eigvals(mean_b))) >= 1.0:
        raise ValueError("unstable FNAR: mean transition has spectral radius >= 1")
    # top Lyapunov exponent along the realized path
    v = np.ones(transitions.shape[1]) / math.sqrt(transitions.shape[1])
    acc = 0.0
    for b in transitions:
        v = b @ v
        n = np.linalg.norm(v)
        if n == 0:
            return
        acc += math.log(n)
        v /= n
    if acc / len(transitions) >= 0.0:
        raise ValueError("unstable FNAR: realized transitions are explosive")


def generate(spec: SyntheticSpec, rng: np.random.Generator | None = None) -> SyntheticData:
    """Draw one synthetic data set; deterministic given ``spec.seed``.

    Raises:
        ValueError: if the FNAR coefficients imply an unstable process.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    N, m, r, T = spec.N, spec.m, spec.r, spec.T
    beta, rho, alpha = spec.theta()
    factors = _orthonormal_factors(rng, T, N, r)
    U = _loadings(rng, m, spec.loading_scales())
    common = factors @ U.T
    w = common
    if spec.noise_scale:
        w = common + _layer_noise(rng, T, N, m, spec.noise_scale, spec.layer_corr)

    transitions = factors @ beta + np.diag(rho)
    _check_stable(transitions)
    b_mean = transitions.mean(axis=0)
    y0 = np.linalg.solve(np.eye(N) - b_mean, alpha)
    shocks = rng.multivariate_normal(np.zeros(N), spec.nu_cov(), size=T) if spec.nu_scale else np.zeros((T, N))
    y = simulate_y(factors, beta, rho, alpha, shocks, y0)

    nodes = [f"n{i + 1}" for i in range(N)]
    layers = [f"l{k + 1}" for k in range(m)]
    periods = list(range(T))
    panel = WeightPanel(nodes, layers, periods, w)
    truth = FactorModel(U, np.sum(U**2, axis=0), factors, nodes, layers, periods, "truth")
    return SyntheticData(panel, PanelSeries(periods, y, nodes), truth, beta, rho, alpha, common)


def loading_error(est: FactorModel, truth: FactorModel) -> float:
    """``(1/sqrt(m)) ||U_hat - U J||`` with ``J`` aligning column signs."""
    s = align_signs(truth.loadings, est.loadings)
    return float(np.linalg.norm(est.loadings - truth.loadings * s) / math.sqrt(truth.m))


def factor_error(est: FactorModel, truth: FactorModel) -> float:
    """Root mean over periods of ``||F3_hat_t - J F3_t||``."""
    s = align_signs(truth.loadings, est.loadings)
    d = est.factors - truth.factors * s
    return float(np.sqrt(np.mean(np.sum(d**2, axis=(1, 2, 3)))))


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` on ``log x``."""
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


def _rep_seeds(seed: int, cell: int, reps: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence([seed, cell]).spawn(reps)


def rate_experiment_prop1(
    ms=(20, 40, 80),
    Ts=(100, 400, 1600),
    reps: int = 50,
    base: SyntheticSpec | None = None,
    seed: int = 0,
) -> pd.DataFrame:
    """Median sign-aligned loading and factor errors over an ``(m, T)`` grid."""
    base = base or SyntheticSpec(N=10, r=2, beta=(0.0, 0.0), nu_scale=0.0)
    rows = []
    for ci, (m, T) in enumerate((m, T) for m in ms for T in Ts):
        spec = replace(base, m=m, T=T)
        le, fe = [], []
        for ss in _rep_seeds(seed, ci, reps):
            data = generate(spec, np.random.default_rng(ss))
            est, _ = estimate_factor_model(data.panel, spec.r)
            le.append(loading_error(est, data.truth))
            fe.append(factor_error(est, data.truth))
        rows.append(dict(m=m, T=T, loading_error=float(np.median(le)), factor_error=float(np.median(fe))))
    return pd.DataFrame(rows)


def slope_table(errors: pd.DataFrame) -> pd.DataFrame:
    """Log-log slopes of each error against ``T`` per ``m`` and against ``m`` per ``T``."""
    rows = []
    for col in ("loading_error", "factor_error"):
        for m, g in errors.groupby("m"):
            if len(g) > 1 and (g[col] > 0).all():
                rows.append(dict(error=col, axis="T", fixed=m, slope=loglog_slope(g["T"], g[col])))
        for T, g in errors.groupby("T"):
            if len(g) > 1 and (g[col] > 0).all():
                rows.append(dict(error=col, axis="m", fixed=T, slope=loglog_slope(g["m"], g[col])))
    return pd.DataFrame(rows, columns=["error", "axis", "fixed", "slope"])


def rate_experiment_prop2(
    cells=((20, 200), (40, 800), (80, 3200)),
    reps: int = 50,
    base: SyntheticSpec | None = None,
    seed: int = 0,
) -> pd.DataFrame:
    """Median ``||theta_hat - theta*||`` with estimated and with true factors.

    ``theta*`` carries the estimated sign flips of the factors.
    """
    base = base or SyntheticSpec(N=8, r=2, noise_scale=1.0)
    rows = []
    for ci, (m, T) in enumerate(cells):
        spec = replace(base, m=m, T=T)
        err_est, err_true, gap = [], [], []
        for ss in _rep_seeds(seed, ci, reps):
            data = generate(spec, np.random.default_rng(ss))
            est, _ = estimate_factor_model(data.panel, spec.r)
            s = align_signs(est.loadings, data.truth.loadings)
            theta_star = np.concatenate([data.beta * s, data.rho, data.alpha])
            th_est = fit_ols(data.y, est).theta
            th_true = fit_ols(data.y, data.truth).theta
            err_est.append(np.linalg.norm(th_est - theta_star))
            err_true.append(np.linalg.norm(th_true - data.theta))
            gap.append(np.linalg.norm(th_est - th_true * np.concatenate([s, np.ones(2 * spec.N)])))
        rows.append(
            dict(
                m=m,
                T=T,
                theta_error=float(np.median(err_est)),
                theta_error_true_factors=float(np.median(err_true)),
                estimated_vs_true_gap=float(np.median(gap)),
            )
        )
    return pd.DataFrame(rows)
