"""Multilayer weight tensors built from bilateral flow records.

A flow record ``(period, layer, reporter, partner, value)`` is a directed
magnitude from ``reporter`` to ``partner`` (exports of the reporter to the
partner, assets of the reporter issued by the partner, absolute bank-flow
changes, M&A deal values booked once per deal). The weight of ``j`` for
``i`` in layer ``k`` is the bilateral total ``flow(i->j) + flow(j->i)``
divided by the sum of those totals over all partners of ``i``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Mapping, Sequence

import numpy as np

from .tensor3 import Tensor3

__all__ = [
    "FlowRecord",
    "WeightPanel",
    "build_symmetric_share_weights",
    "normalize_rows",
    "fill_missing",
    "fill_missing_series",
    "moving_average_smooth",
    "cosine_similarity_matrix",
    "expand_to_frequency",
    "annual_mapping",
]

ROW_SUM_TOL = 1e-10


@dataclass(frozen=True)
class FlowRecord:
    period: Hashable
    layer: Hashable
    reporter: Hashable
    partner: Hashable
    value: float


@dataclass
class WeightPanel:
    """Labeled time series of ``N x N x m`` weight tensors.

    Attributes:
        nodes, layers, periods: Ordered labels.
        weights: Array of shape ``(T, N, N, m)``; ``weights[t]`` is the
            tensor for ``periods[t]``.
        isolated: Boolean array ``(T, N, m)`` flagging rows with zero total
            flow (kept as zero rows).
        flows: Optional ``(T, N, N, m)`` bilateral totals the weights were
            normalized from. Needed for smoothing.
    """

    nodes: list
    layers: list
    periods: list
    weights: np.ndarray
    isolated: np.ndarray | None = None
    flows: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.nodes = list(self.nodes)
        self.layers = list(self.layers)
        self.periods = list(self.periods)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        shape = (len(self.periods), len(self.nodes), len(self.nodes), len(self.layers))
        if self.weights.shape != shape:
            raise ValueError(f"weights have shape {self.weights.shape}, expected {shape}")
        if self.isolated is None:
            self.isolated = np.zeros((shape[0], shape[1], shape[3]), dtype=bool)
        if self.flows is not None and np.shape(self.flows) != shape:
            raise ValueError("flows must have the same shape as weights")

    @property
    def T(self) -> int:
        return self.weights.shape[0]

    @property
    def N(self) -> int:
        return self.weights.shape[1]

    @property
    def m(self) -> int:
        return self.weights.shape[3]

    def tensor(self, t: int) -> Tensor3:
        return Tensor3(self.weights[t])

    def tensors(self) -> list[Tensor3]:
        return [Tensor3(w) for w in self.weights]

    def validate(self, tol: float = ROW_SUM_TOL) -> None:
        """Check zero diagonals, nonnegativity and row normalization."""
        w = self.weights
        idx = np.arange(self.N)
        if np.any(w[:, idx, idx, :] != 0.0):
            raise ValueError("weight tensor has a nonzero diagonal entry")
        if np.any(w < 0):
            raise ValueError("weight tensor has a negative entry")
        sums = w.sum(axis=2)  # (T, N, m)
        target = np.where(self.isolated, 0.0, 1.0)
        bad = np.abs(sums - target) > tol
        if np.any(bad):
            t, i, k = np.argwhere(bad)[0]
            raise ValueError(
                f"row {self.nodes[i]!r} of layer {self.layers[k]!r} at "
                f"{self.periods[t]!r} sums to {sums[t, i, k]!r}"
            )


def _index(labels: Sequence) -> dict:
    out = {lab: i for i, lab in enumerate(labels)}
    if len(out) != len(labels):
        raise ValueError("labels must be unique")
    return out


def _dense_directed(records: Iterable[FlowRecord], nodes, layers, periods) -> np.ndarray:
    """Sum records into a ``(T, N, N, m)`` array of directed flows."""
    ni, li, pi = _index(nodes), _index(layers), _index(periods)
    out = np.zeros((len(periods), len(nodes), len(nodes), len(layers)))
    dropped = 0
    for rec in records:
        try:
            t, k = pi[rec.period], li[rec.layer]
            i, j = ni[rec.reporter], ni[rec.partner]
        except KeyError as exc:
            raise ValueError(f"record {rec!r} references unknown label {exc.args[0]!r}") from None
        v = float(rec.value)
        if not math.isfinite(v):
            raise ValueError(f"record {rec!r} has a non-finite value")
        if v < 0:
            raise ValueError(f"record {rec!r} has a negative value")
        if i == j:
            dropped += 1
            continue
        out[t, i, j, k] += v
    if dropped:
        warnings.warn(f"dropped {dropped} self-loop record(s)", stacklevel=3)
    return out


def normalize_rows(flows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalize bilateral totals ``(T, N, N, m)`` with a zero diagonal.

    Returns ``(weights, isolated)``; rows with zero total stay zero and are
    flagged in ``isolated`` (shape ``(T, N, m)``).
    """
    flows = np.array(flows, dtype=np.float64)
    idx = np.arange(flows.shape[1])
    flows[:, idx, idx, :] = 0.0
    totals = flows.sum(axis=2, keepdims=True)
    isolated = totals[:, :, 0, :] == 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        weights = np.where(totals > 0, flows / np.where(totals > 0, totals, 1.0), 0.0)
    return weights, isolated


def build_symmetric_share_weights(
    records: Iterable[FlowRecord], nodes: Sequence, layers: Sequence, periods: Sequence
) -> WeightPanel:
    """Weight of ``j`` for ``i``: share of ``i``'s bilateral totals going to ``j``.

    Raises:
        ValueError: if a record uses an undeclared label or a negative value.
    """
    directed = _dense_directed(records, nodes, layers, periods)
    bilateral = directed + directed.transpose(0, 2, 1, 3)
    weights, isolated = normalize_rows(bilateral)
    return WeightPanel(nodes, layers, periods, weights, isolated, flows=bilateral)


def fill_missing_series(values, axis: int = 0) -> np.ndarray:
    """Fill NaNs along ``axis`` with the last prior value, else the first later one.

    Cells never observed become 0.
    """
    arr = np.moveaxis(np.array(values, dtype=np.float64), axis, 0)
    T = arr.shape[0]
    out = arr.copy()
    for t in range(1, T):
        out[t] = np.where(np.isnan(out[t]), out[t - 1], out[t])
    for t in range(T - 2, -1, -1):
        out[t] = np.where(np.isnan(out[t]), out[t + 1], out[t])
    out[np.isnan(out)] = 0.0
    return np.moveaxis(out, 0, axis)


def fill_missing(records: Iterable[FlowRecord], periods: Sequence, policy: str = "carry") -> list[FlowRecord]:
    """Fill missing ``(reporter, partner, layer)`` cells across ``periods``.

    A cell is missing in a period when no record exists for it there, or its
    record carries a NaN value, while the cell is observed in some other
    period. ``policy="carry"`` uses the previous period's value, or the
    earliest later value when nothing precedes; ``policy="zero"`` fills 0.
    Cells never observed are dropped (they contribute zero flow).
    """
    if policy not in ("carry", "zero"):
        raise ValueError(f"unknown fill policy {policy!r}")
    pi = _index(periods)
    series: dict[tuple, np.ndarray] = {}
    for rec in records:
        key = (rec.layer, rec.reporter, rec.partner)
        s = series.setdefault(key, np.full(len(periods), np.nan))
        t = pi[rec.period]
        v = float(rec.value)
        if not np.isnan(v):
            s[t] = v if np.isnan(s[t]) else s[t] + v
    out = []
    for (layer, rep, par), s in series.items():
        if np.all(np.isnan(s)):
            continue
        filled = fill_missing_series(s) if policy == "carry" else np.nan_to_num(s, nan=0.0)
        out.extend(FlowRecord(p, layer, rep, par, float(v)) for p, v in zip(periods, filled))
    return out


def moving_average_smooth(panel: WeightPanel, layers: Iterable, window: int) -> WeightPanel:
    """Trailing moving average of the flows of selected layers, re-normalized.

    The window is truncated at the start of the sample. Layers not listed
    are returned untouched.
    """
    if window < 1:
        raise ValueError("window must be at least 1")
    if panel.flows is None:
        raise ValueError("panel carries no flows to smooth")
    li = _index(panel.layers)
    ks = sorted({li[lab] for lab in layers})
    flows = panel.flows.copy()
    if ks and window > 1:
        csum = np.cumsum(panel.flows[..., ks], axis=0)
        smoothed = np.empty_like(csum)
        for t in range(panel.T):
            lo = t - window
            total = csum[t] - (csum[lo] if lo >= 0 else 0.0)
            smoothed[t] = total / min(window, t + 1)
        flows[..., ks] = smoothed
    weights, isolated = normalize_rows(flows)
    keep = [k for k in range(panel.m) if k not in ks]
    weights[..., keep] = panel.weights[..., keep]
    isolated[..., keep] = panel.isolated[..., keep]
    return WeightPanel(panel.nodes, panel.layers, panel.periods, weights, isolated, flows=flows)


def cosine_similarity_matrix(panel: WeightPanel) -> np.ndarray:
    """``m x m`` cosine similarity between layers stacked over all periods.

    Pairs involving a layer with zero norm are NaN.
    """
    x = np.moveaxis(panel.weights, 3, 0).reshape(panel.m, -1)
    norms = np.linalg.norm(x, axis=1)
    dots = x @ x.T
    with np.errstate(invalid="ignore", divide="ignore"):
        sim = dots / np.outer(norms, norms)
    zero = norms == 0
    sim[zero, :] = np.nan
    sim[:, zero] = np.nan
    np.fill_diagonal(sim, np.where(zero, np.nan, 1.0))
    return sim


def expand_to_frequency(
    panel: WeightPanel, target_periods: Sequence, mapping: Mapping | Callable
) -> WeightPanel:
    """Repeat source tensors onto a finer set of target periods.

    ``mapping`` maps each target period to a source period (dict or
    callable). A callable may return ``None`` to mean the earliest source
    period.
    """
    pi = _index(panel.periods)
    src = []
    for tp in target_periods:
        if callable(mapping):
            s = mapping(tp)
        elif tp in mapping:
            s = mapping[tp]
        else:
            raise ValueError(f"target period {tp!r} is not mapped")
        if s is None:
            s = panel.periods[0]
        if s not in pi:
            raise ValueError(f"target period {tp!r} maps to unknown source {s!r}")
        src.append(pi[s])
    src = np.asarray(src, dtype=int)
    flows = None if panel.flows is None else panel.flows[src]
    return WeightPanel(
        panel.nodes, panel.layers, list(target_periods), panel.weights[src], panel.isolated[src], flows
    )


def annual_mapping(target_periods: Sequence, source_years: Sequence) -> dict:
    """Map periods like ``"2003Q2"`` or ``2003`` to the matching year.

    Targets before the first source year map to the first source year;
    targets after the last map to the last.
    """
    years = sorted(source_years, key=int)
    lookup = {int(y): y for y in years}
    first, last = int(years[0]), int(years[-1])
    out = {}
    for tp in target_periods:
        y = int(str(tp)[:4])
        y = min(max(y, first), last)
        if y not in lookup:
            raise ValueError(f"no source year for target period {tp!r}")
        out[tp] = lookup[y]
    return out
