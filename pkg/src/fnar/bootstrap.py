"""Residual bootstrap for the FNAR coefficients.

Each iteration resamples the factor-model residual tensors over time,
re-extracts factors (sign-aligned to the original loadings), simulates the
endogenous panel with Gaussian shocks from the fitted model and re-fits it.
Iteration ``b`` draws from its own stream seeded by ``(seed, b)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .estimation import FnarFit, _values, fit_ols, fit_sur, simulate_y
from .netfactors import FactorModel, align_signs, estimate_factor_model

__all__ = ["BootstrapResult", "BootstrapFailure", "run_bootstrap", "shock_factor"]

MAX_FAIL_SHARE = 0.01


class BootstrapFailure(RuntimeError):
    pass


@dataclass
class BootstrapResult:
    """Bootstrap draws of ``theta`` and their summaries.

    ``intervals`` has shape ``(2, dim theta)``: lower and upper percentile
    endpoints at ``level``.
    """

    iterations: int
    draws: np.ndarray
    names: list
    level: float
    seed: int
    failures: int = 0

    @property
    def means(self) -> np.ndarray:
        return self.draws.mean(axis=0)

    @property
    def intervals(self) -> np.ndarray:
        a = (1.0 - self.level) / 2.0
        # order statistics of the draws, no interpolation
        lo = np.quantile(self.draws, a, axis=0, method="inverted_cdf")
        hi = np.quantile(self.draws, 1.0 - a, axis=0, method="inverted_cdf")
        return np.vstack([lo, hi])

    def summary(self) -> list[dict]:
        lo, hi = self.intervals
        return [
            dict(name=n, mean=float(mu), lower=float(l), upper=float(u))
            for n, mu, l, u in zip(self.names, self.means, lo, hi)
        ]


def shock_factor(sigma: np.ndarray) -> np.ndarray:
    """Matrix ``L`` with ``L L' = sigma``: Cholesky, or a symmetric root if singular."""
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(0.5 * (sigma + sigma.T))
        return vecs * np.sqrt(np.clip(vals, 0.0, None))


def _one_draw(b, w_hat, resid, model, fit, y0, index, L, refit, seed):
    rng = np.random.default_rng([seed, b])
    T_w = w_hat.shape[0]
    w_b = w_hat + resid[rng.integers(0, T_w, size=T_w)]
    est, _ = estimate_factor_model(w_b, model.r)
    est = est.flip(align_signs(est.loadings, model.loadings))
    factors = est.factors[index]
    shocks = rng.standard_normal((len(index), L.shape[0])) @ L.T
    y_b = simulate_y(factors, fit.beta, fit.rho, fit.alpha, shocks, y0)
    return refit(y_b, factors).theta


def run_bootstrap(
    panel,
    y,
    model: FactorModel,
    fit: FnarFit,
    B: int = 1000,
    seed: int = 0,
    level: float = 0.95,
    period_index=None,
) -> BootstrapResult:
    """Bootstrap distribution of the homogeneous FNAR coefficients.

    ``model`` is the factor model estimated on ``panel``; ``fit`` is the
    FNAR estimated on ``y`` with those factors. When the panel is coarser
    than ``y``, ``period_index[t]`` gives the panel row used for ``y`` row
    ``t`` (default: identity). The re-fit uses the same estimator as
    ``fit``; shocks are Gaussian with covariance ``fit.sigma_nu``.

    Raises:
        BootstrapFailure: if more than 1% of iterations fail to estimate.
    """
    if B < 1:
        raise ValueError("B must be at least 1")
    if fit.mode != "homogeneous":
        raise ValueError("the bootstrap supports homogeneous fits only")
    w = panel.weights if hasattr(panel, "weights") else np.asarray(panel, dtype=np.float64)
    yv = _values(y)
    index = np.arange(w.shape[0]) if period_index is None else np.asarray(period_index, dtype=int)
    if index.shape[0] != yv.shape[0]:
        raise ValueError("weight panel and y must cover the same periods")
    w_hat = model.reconstruct()
    resid = w - w_hat
    L = shock_factor(fit.sigma_nu)
    if fit.estimator == "SUR":
        refit = lambda yy, mm: fit_sur(yy, mm, max_iter=max(fit.iterations, 1))  # noqa: E731
    else:
        refit = fit_ols

    draws, failures = [], 0
    for b in range(B):
        try:
            draws.append(_one_draw(b, w_hat, resid, model, fit, yv[0], index, L, refit, seed))
        except (np.linalg.LinAlgError, ValueError) as exc:
            failures += 1
            warnings.warn(f"bootstrap iteration {b} failed: {exc}", stacklevel=2)
    if failures > MAX_FAIL_SHARE * B:
        raise BootstrapFailure(f"{failures} of {B} bootstrap iterations failed")
    return BootstrapResult(
        iterations=B,
        draws=np.asarray(draws),
        names=fit.names(),
        level=level,
        seed=seed,
        failures=failures,
    )
