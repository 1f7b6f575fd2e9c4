"""Network factors from mode-3 principal components of weight tensors.

The cross-layer Gram matrix ``(1/T) sum_t W3_t W3_t'`` is eigendecomposed;
loadings are the top ``r`` eigenvectors scaled by root eigenvalues and the
factor tensors are ``W_t x_3 (M^{-1/2} V')``. Weights are neither demeaned
nor standardized over time.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .netweights import WeightPanel
from .tensor3 import Tensor3

__all__ = [
    "FactorModel",
    "ResidualPanel",
    "RankSelectionWarning",
    "gram_mode3",
    "estimate_factor_model",
    "eigenvalue_ratios",
    "select_rank",
    "variance_explained",
    "variance_explained_link",
    "factor_row_sums",
    "align_signs",
]

EIG_TOL = 1e-12


class RankSelectionWarning(UserWarning):
    pass


@dataclass
class FactorModel:
    """Estimated loadings and factor tensors.

    Attributes:
        loadings: ``m x r`` matrix ``U = V M^{1/2}``.
        eigenvalues: Top ``r`` eigenvalues of the Gram matrix, descending.
        factors: ``(T, N, N, r)`` array; ``factors[t, :, :, k]`` is the
            ``k``-th factor matrix at period ``t``.
    """

    loadings: np.ndarray
    eigenvalues: np.ndarray
    factors: np.ndarray
    nodes: list = field(default_factory=list)
    layers: list = field(default_factory=list)
    periods: list = field(default_factory=list)
    sign_convention: str = "max-abs-positive"

    @property
    def r(self) -> int:
        return self.loadings.shape[1]

    @property
    def m(self) -> int:
        return self.loadings.shape[0]

    @property
    def N(self) -> int:
        return self.factors.shape[1]

    @property
    def T(self) -> int:
        return self.factors.shape[0]

    @property
    def eigenvectors(self) -> np.ndarray:
        return self.loadings / np.sqrt(self.eigenvalues)

    def factor_tensor(self, t: int) -> Tensor3:
        return Tensor3(self.factors[t])

    def reconstruct(self, factors: np.ndarray | None = None) -> np.ndarray:
        """``F_t x_3 U`` for every period, shape ``(T, N, N, m)``."""
        f = self.factors if factors is None else factors
        return f @ self.loadings.T

    def flip(self, signs) -> "FactorModel":
        """Multiply loading column ``k`` and factor ``k`` by ``signs[k]``."""
        s = np.asarray(signs, dtype=np.float64)
        return FactorModel(
            self.loadings * s,
            self.eigenvalues.copy(),
            self.factors * s,
            self.nodes,
            self.layers,
            self.periods,
            "custom",
        )


@dataclass
class ResidualPanel:
    """Idiosyncratic residuals ``W_t - F_t x_3 U``, shape ``(T, N, N, m)``."""

    residuals: np.ndarray

    def tensor(self, t: int) -> Tensor3:
        return Tensor3(self.residuals[t])


def _weights(panel) -> np.ndarray:
    return panel.weights if isinstance(panel, WeightPanel) else np.asarray(panel, dtype=np.float64)


def gram_mode3(panel) -> np.ndarray:
    """Cross-layer inner product ``(1/T) sum_t mat_3(W_t) mat_3(W_t)'``."""
    w = _weights(panel)
    T, m = w.shape[0], w.shape[3]
    x = w.reshape(-1, m)
    g = x.T @ x / T
    return 0.5 * (g + g.T)


def _sorted_eigh(gram: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh(gram)
    # descending; stable sort keeps the original index order on ties
    order = np.argsort(-vals, kind="stable")
    return vals[order], vecs[:, order]


def _canonical_signs(vecs: np.ndarray) -> np.ndarray:
    pick = np.argmax(np.abs(vecs), axis=0)
    s = np.sign(vecs[pick, np.arange(vecs.shape[1])])
    s[s == 0] = 1.0
    return s


def estimate_factor_model(panel, r: int) -> tuple[FactorModel, ResidualPanel]:
    """Estimate ``r`` network factors and loadings by mode-3 PCA.

    Each loading column is signed so that its largest-magnitude entry is
    positive.

    Raises:
        ValueError: if ``r`` is outside ``[1, m]`` or exceeds the numerical
            rank of the Gram matrix.
    """
    w = _weights(panel)
    m = w.shape[3]
    if not 1 <= r <= m:
        raise ValueError(f"r must lie in [1, {m}], got {r}")
    vals, vecs = _sorted_eigh(gram_mode3(w))
    if vals[0] <= 0 or vals[r - 1] <= EIG_TOL * vals[0]:
        raise ValueError(
            f"r={r} exceeds the numerical rank of the layer Gram matrix "
            f"(eigenvalue {r} is {vals[r - 1]:.3e})"
        )
    vals, vecs = vals[:r], vecs[:, :r]
    vecs = vecs * _canonical_signs(vecs)
    loadings = vecs * np.sqrt(vals)
    proj = vecs / np.sqrt(vals)  # (m, r) == (M^{-1/2} V')'
    factors = w @ proj
    labels = {}
    if isinstance(panel, WeightPanel):
        labels = dict(nodes=panel.nodes, layers=panel.layers, periods=panel.periods)
    model = FactorModel(loadings, vals, factors, **labels)
    return model, ResidualPanel(w - model.reconstruct())


def eigenvalue_ratios(panel, r_max: int) -> np.ndarray:
    """Ratios ``mu_j / mu_{j+1}`` of Gram eigenvalues for ``j = 1..r_max``.

    Eigenvalues below ``EIG_TOL * mu_1`` count as zero, giving ``inf``.
    """
    vals, _ = _sorted_eigh(gram_mode3(panel))
    if r_max >= len(vals):
        raise ValueError(f"r_max must be below m={len(vals)}")
    floor = EIG_TOL * max(vals[0], 0.0)
    vals = np.where(vals <= floor, 0.0, vals)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = vals[:r_max] / vals[1 : r_max + 1]
    ratios[vals[:r_max] == 0] = np.nan
    return ratios


def select_rank(panel, r_max: int) -> int:
    """Rank by the eigenvalue-ratio criterion, the argmax of ``mu_j/mu_{j+1}``.

    A flat spectrum (all ratios equal) returns 1 and emits
    :class:`RankSelectionWarning`.
    """
    ratios = eigenvalue_ratios(panel, r_max)
    if np.all(np.isnan(ratios)) or np.allclose(ratios, ratios[0], rtol=1e-9, atol=0.0):
        warnings.warn("degenerate layer spectrum; selecting rank 1", RankSelectionWarning, stacklevel=2)
        return 1
    return int(np.nanargmax(ratios)) + 1


def variance_explained(panel, model: FactorModel) -> tuple[float, np.ndarray]:
    """Share of ``||W||^2`` reproduced by all factors and by each factor."""
    w = _weights(panel)
    denom = float(np.sum(w**2))
    total = float(np.sum(model.reconstruct() ** 2)) / denom
    # ||F_k u_k'||^2 = ||u_k||^2 ||F_k||^2
    per = np.sum(model.loadings**2, axis=0) * np.sum(model.factors**2, axis=(0, 1, 2)) / denom
    return total, per


def variance_explained_link(panel, model: FactorModel, i: int, j: int) -> np.ndarray:
    """Per-factor share of the variance of the ``(i, j)`` link across layers and time.

    Returns NaNs when the link is identically zero.
    """
    if i == j:
        raise ValueError("self-loops carry no weight; i must differ from j")
    w = _weights(panel)
    denom = float(np.sum(w[:, i, j, :] ** 2))
    if denom == 0.0:
        return np.full(model.r, np.nan)
    f = model.factors[:, i, j, :]  # (T, r)
    return np.sum(model.loadings**2, axis=0) * np.sum(f**2, axis=0) / denom


def factor_row_sums(model: FactorModel, tol: float = 1e-8, check: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Common row sum and mean absolute row sum of each factor.

    Args:
        tol: Allowed spread of row sums across rows and periods when
            ``check`` is set.

    Returns:
        ``(row_sum, avg_abs_row_sum)``, each of length ``r``.

    Raises:
        ValueError: if ``check`` and some factor's rows do not share a sum.
    """
    sums = model.factors.sum(axis=2)  # (T, N, r)
    row_sum = sums.mean(axis=(0, 1))
    if check:
        spread = np.max(np.abs(sums - row_sum), axis=(0, 1))
        scale = np.maximum(1.0, np.abs(row_sum))
        bad = np.flatnonzero(spread > tol * scale)
        if bad.size:
            raise ValueError(f"factor {bad[0] + 1} has unequal row sums (spread {spread[bad[0]]:.3e})")
    avg_abs = np.abs(model.factors).sum(axis=2).mean(axis=(0, 1))
    return row_sum, avg_abs


def align_signs(loadings: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Signs ``s`` making ``diag((loadings * s)' reference)`` positive."""
    d = np.sum(loadings * reference, axis=0)
    s = np.sign(d)
    s[s == 0] = 1.0
    return s
