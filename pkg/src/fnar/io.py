"""File formats used by the command line tools.

Flow CSV: ``period,layer,reporter,partner,value`` (header required).
Endogenous CSV: ``period,node,value``.
Panel bundle: ``panel.json`` (labels, isolated rows) next to ``panel.csv``
with one ``period,layer,reporter,partner,weight`` row per off-diagonal cell.
All labels are kept as strings.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from collections import Counter
from pathlib import Path

import numpy as np

from .estimation import PanelSeries
from .netweights import FlowRecord, WeightPanel

SCHEMA_VERSION = "1.0"

FLOW_COLUMNS = ["period", "layer", "reporter", "partner", "value"]
ENDOG_COLUMNS = ["period", "node", "value"]


class InputError(Exception):
    """Malformed input file or configuration."""


def fmt(x: float) -> str:
    """Shortest round-tripping float text."""
    x = float(x)
    if x == 0.0:
        return "0"
    return repr(x)


def _read_rows(path, columns):
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise InputError(f"{path}: file is empty")
        header = [h.strip() for h in header]
        if header != columns:
            raise InputError(f"{path}:1: expected header {','.join(columns)}, got {','.join(header)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(columns):
                raise InputError(f"{path}:{lineno}: expected {len(columns)} fields, got {len(row)}")
            rows.append((lineno, [c.strip() for c in row]))
    if not rows:
        raise InputError(f"{path}: no data rows")
    return rows


def _parse_value(path, lineno, text):
    if text == "" or text.upper() in ("NA", "NAN"):
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise InputError(f"{path}:{lineno}: value {text!r} is not a number") from None


def read_flows(path) -> list[FlowRecord]:
    """Read a flow CSV. Empty/``NA`` values become NaN (missing).

    Duplicate ``(period, layer, reporter, partner)`` rows are summed and a
    warning is emitted.
    """
    rows = _read_rows(path, FLOW_COLUMNS)
    recs = []
    for lineno, (period, layer, rep, par, val) in rows:
        v = _parse_value(path, lineno, val)
        if not math.isnan(v) and (v < 0 or not math.isfinite(v)):
            raise InputError(f"{path}:{lineno}: value must be finite and nonnegative")
        recs.append(FlowRecord(period, layer, rep, par, v))
    counts = Counter((r.period, r.layer, r.reporter, r.partner) for r in recs)
    dups = sum(1 for c in counts.values() if c > 1)
    if dups:
        warnings.warn(f"{path}: {dups} duplicate flow key(s) summed", stacklevel=2)
    return recs


def read_endogenous(path, nodes=None, periods=None) -> PanelSeries:
    rows = _read_rows(path, ENDOG_COLUMNS)
    data = {}
    for lineno, (period, node, val) in rows:
        v = _parse_value(path, lineno, val)
        if math.isnan(v):
            raise InputError(f"{path}:{lineno}: missing value")
        if (period, node) in data:
            raise InputError(f"{path}:{lineno}: duplicate entry for ({period}, {node})")
        data[(period, node)] = v
    nodes = list(nodes) if nodes is not None else sorted({n for _, n in data})
    periods = list(periods) if periods is not None else sorted({p for p, _ in data})
    vals = np.full((len(periods), len(nodes)), np.nan)
    pi = {p: i for i, p in enumerate(periods)}
    ni = {n: i for i, n in enumerate(nodes)}
    for (p, n), v in data.items():
        if n not in ni:
            raise InputError(f"{path}: unknown node {n!r}")
        if p in pi:
            vals[pi[p], ni[n]] = v
    if np.isnan(vals).any():
        t, i = np.argwhere(np.isnan(vals))[0]
        raise InputError(f"{path}: no value for node {nodes[i]!r} in period {periods[t]!r}")
    return PanelSeries(periods, vals, nodes)


def write_panel(panel: WeightPanel, out_dir) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path, meta_path = out_dir / "panel.csv", out_dir / "panel.json"
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        fh.write("period,layer,reporter,partner,weight\n")
        for t, p in enumerate(panel.periods):
            for k, lay in enumerate(panel.layers):
                for i, a in enumerate(panel.nodes):
                    for j, b in enumerate(panel.nodes):
                        if i != j:
                            fh.write(f"{p},{lay},{a},{b},{fmt(panel.weights[t, i, j, k])}\n")
    isolated = [
        dict(period=panel.periods[t], node=panel.nodes[i], layer=panel.layers[k])
        for t, i, k in np.argwhere(panel.isolated)
    ]
    meta = dict(
        schema_version=SCHEMA_VERSION,
        kind="weight_panel",
        nodes=panel.nodes,
        layers=panel.layers,
        periods=panel.periods,
        isolated=isolated,
        data="panel.csv",
    )
    write_json(meta_path, meta)
    return csv_path, meta_path


def read_panel(path) -> WeightPanel:
    """Read a panel bundle from its ``panel.json`` (or the containing directory)."""
    path = Path(path)
    meta_path = path / "panel.json" if path.is_dir() else path
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read panel metadata {meta_path}: {exc}") from exc
    if meta.get("kind") != "weight_panel":
        raise InputError(f"{meta_path} is not a weight panel bundle")
    nodes, layers, periods = meta["nodes"], meta["layers"], meta["periods"]
    # CSV cells are text, so match labels by their string form
    ni = {str(n): i for i, n in enumerate(nodes)}
    li = {str(n): i for i, n in enumerate(layers)}
    pi = {str(n): i for i, n in enumerate(periods)}
    w = np.zeros((len(periods), len(nodes), len(nodes), len(layers)))
    rows = _read_rows(meta_path.parent / meta.get("data", "panel.csv"), ["period", "layer", "reporter", "partner", "weight"])
    for lineno, (p, lay, a, b, v) in rows:
        try:
            w[pi[p], ni[a], ni[b], li[lay]] = float(v)
        except (KeyError, ValueError):
            raise InputError(f"panel.csv:{lineno}: bad row") from None
    iso = np.zeros((len(periods), len(nodes), len(layers)), dtype=bool)
    for rec in meta.get("isolated", []):
        iso[pi[str(rec["period"])], ni[str(rec["node"])], li[str(rec["layer"])]] = True
    return WeightPanel(nodes, layers, periods, w, iso)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {"schema_version": SCHEMA_VERSION, **payload}
    path.write_text(json.dumps(_jsonable(body), indent=2, sort_keys=False) + "\n", encoding="utf-8")
    return path
