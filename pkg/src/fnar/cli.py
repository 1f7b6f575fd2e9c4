"""Command line front end.

Subcommands: ``ingest``, ``factors``, ``estimate``, ``bootstrap``,
``forecast`` and ``simulate``. Each reads an optional YAML/JSON config
(``--config``), writes its artifacts under ``--out`` and exits with

* 0 on success,
* 2 on configuration, schema or I/O errors,
* 3 on numerical failures,

printing a JSON error document on stderr in the failure cases. The log
level comes from the ``FNAR_LOG_LEVEL`` environment variable.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from . import io
from .bootstrap import run_bootstrap
from .estimation import fit_heterogeneous, fit_ols, fit_sur, rescale_to_layers
from .forecastlab import MODELS, WindowPlan, run_comparison
from .io import InputError, SCHEMA_VERSION, write_json
from .montecarlo import SyntheticSpec, rate_experiment_prop1, rate_experiment_prop2, slope_table
from .netfactors import (
    FactorModel,
    eigenvalue_ratios,
    estimate_factor_model,
    factor_row_sums,
    select_rank,
    variance_explained,
)
from .netweights import (
    FlowRecord,
    annual_mapping,
    build_symmetric_share_weights,
    cosine_similarity_matrix,
    fill_missing,
    moving_average_smooth,
)

log = logging.getLogger("fnar")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


# ------------------------------------------------------------------ config


@dataclass
class IngestConfig:
    nodes: list | None = None
    layers: list | None = None
    periods: list | None = None
    fill_policy: str = "carry"
    smooth: dict = field(default_factory=dict)  # layer -> window
    non_reporters: list = field(default_factory=list)
    non_reporter_layers: list = field(default_factory=list)


@dataclass
class FactorsConfig:
    r: int | str = "auto"
    r_max: int = 8
    top_links: int = 10


@dataclass
class EstimateConfig:
    estimator: str = "ols"
    heterogeneous: bool = False
    max_iter: int = 1
    dof: str = "adjusted"


@dataclass
class BootstrapConfig:
    B: int = 1000
    seed: int = 0
    level: float = 0.95
    save_draws: bool = False


@dataclass
class ForecastConfig:
    first_end: int | None = None
    last_end: int | None = None
    n_windows: int = 60
    models: list = field(default_factory=lambda: list(MODELS))
    reference: str = "fnar"
    dm_lags: int = 0
    hyperparameters: dict = field(default_factory=dict)


@dataclass
class FrequencyConfig:
    mapping: str = "identity"  # or "annual"


@dataclass
class SimulateConfig:
    ms: list = field(default_factory=lambda: [20, 40, 80])
    Ts: list = field(default_factory=lambda: [100, 400, 1600])
    prop2_cells: list = field(default_factory=lambda: [[20, 200], [40, 800], [80, 3200]])
    reps: int = 50
    N: int = 10
    prop2_N: int = 8
    r: int = 2
    noise_scale: float = 0.1
    prop2_noise_scale: float = 1.0


@dataclass
class RunConfig:
    flows: str | None = None
    endogenous: str | None = None
    panel: str | None = None
    out: str = "out"
    seed: int = 0
    ingest: IngestConfig = field(default_factory=IngestConfig)
    factors: FactorsConfig = field(default_factory=FactorsConfig)
    estimate: EstimateConfig = field(default_factory=EstimateConfig)
    bootstrap: BootstrapConfig = field(default_factory=BootstrapConfig)
    forecast: ForecastConfig = field(default_factory=ForecastConfig)
    frequency: FrequencyConfig = field(default_factory=FrequencyConfig)
    simulate: SimulateConfig = field(default_factory=SimulateConfig)

    def validate(self) -> "RunConfig":
        f, e, b = self.factors, self.estimate, self.bootstrap
        if not (f.r == "auto" or (isinstance(f.r, int) and f.r >= 1)):
            raise InputError("factors.r must be a positive integer or 'auto'")
        if e.estimator not in ("ols", "sur"):
            raise InputError("estimate.estimator must be 'ols' or 'sur'")
        if e.dof not in ("adjusted", "T"):
            raise InputError("estimate.dof must be 'adjusted' or 'T'")
        if b.B < 1 or not 0 < b.level < 1:
            raise InputError("bootstrap.B must be >= 1 and bootstrap.level in (0, 1)")
        if self.ingest.fill_policy not in ("carry", "zero"):
            raise InputError("ingest.fill_policy must be 'carry' or 'zero'")
        if self.frequency.mapping not in ("identity", "annual"):
            raise InputError("frequency.mapping must be 'identity' or 'annual'")
        unknown = set(self.forecast.models) - set(MODELS) - {"fnar_het"}
        if unknown:
            raise InputError(f"unknown forecast model(s): {sorted(unknown)}")
        return self


def _build(cls, data, path):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise InputError(f"config section {path or '<root>'} must be a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise InputError(f"unknown config key(s) in {path or '<root>'}: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = cls.__dataclass_fields__[name].default_factory
        sub = default() if callable(default) else None
        if dataclasses.is_dataclass(sub):
            kwargs[name] = _build(type(sub), value, f"{path}.{name}".lstrip("."))
        else:
            kwargs[name] = value
    return cls(**kwargs)


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    data = {}
    if path:
        try:
            data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise InputError(f"cannot read config {path}: {exc}") from exc
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    return _build(RunConfig, data, "").validate()


# ----------------------------------------------------------------- helpers


def drop_non_reporter_pairs(records, non_reporters, layers=None) -> list[FlowRecord]:
    """Zero out flows between two non-reporting nodes.

    Flows between a non-reporter and a reporter need no mirroring: the
    bilateral total already adds the counterparty's reported direction.
    ``layers=None`` applies the rule to every layer.
    """
    nr = set(non_reporters)
    lay = None if not layers else set(layers)
    return [
        r
        for r in records
        if not (r.reporter in nr and r.partner in nr and (lay is None or r.layer in lay))
    ]


def ingest_records(records, cfg: IngestConfig):
    # file labels are strings; YAML may hand back ints for years
    nodes = [str(x) for x in cfg.nodes] if cfg.nodes else sorted({r.reporter for r in records} | {r.partner for r in records})
    layers = [str(x) for x in cfg.layers] if cfg.layers else sorted({r.layer for r in records})
    periods = [str(x) for x in cfg.periods] if cfg.periods else sorted({r.period for r in records})
    recs = fill_missing(records, periods, cfg.fill_policy)
    if cfg.non_reporters:
        recs = drop_non_reporter_pairs(
            recs, [str(x) for x in cfg.non_reporters], [str(x) for x in cfg.non_reporter_layers]
        )
    panel = build_symmetric_share_weights(recs, nodes, layers, periods)
    by_window: dict[int, list] = {}
    for layer, window in cfg.smooth.items():
        by_window.setdefault(int(window), []).append(str(layer))
    for window, lays in sorted(by_window.items()):
        panel = moving_average_smooth(panel, lays, window)
    return panel


def _period_index(panel_periods, y_periods, mapping: str) -> np.ndarray:
    pi = {p: i for i, p in enumerate(panel_periods)}
    if mapping == "annual":
        amap = annual_mapping(y_periods, panel_periods)
        return np.array([pi[amap[p]] for p in y_periods])
    missing = [p for p in y_periods if p not in pi]
    if missing:
        raise InputError(f"endogenous periods missing from the panel: {missing[:5]}")
    return np.array([pi[p] for p in y_periods])


def _choose_r(panel, cfg: FactorsConfig) -> tuple[int, dict]:
    m = panel.m
    if cfg.r == "auto":
        r_max = min(cfg.r_max, m - 1)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            r = select_rank(panel, r_max)
        info = dict(
            method="eigenvalue_ratio",
            r_max=r_max,
            ratios=eigenvalue_ratios(panel, r_max),
            degenerate=any("degenerate" in str(w.message) for w in caught),
        )
        return r, info
    if cfg.r > m:
        raise InputError(f"factors.r={cfg.r} exceeds the number of layers m={m}")
    return int(cfg.r), dict(method="fixed")


def _aligned(model: FactorModel, index) -> np.ndarray:
    return model.factors[index]  # panel rows matched to y periods


def _fit(y, factors, cfg: EstimateConfig):
    if cfg.heterogeneous:
        return fit_heterogeneous(y, factors, estimator=cfg.estimator, max_iter=cfg.max_iter, dof_rule=cfg.dof)
    if cfg.estimator == "sur":
        return fit_sur(y, factors, max_iter=cfg.max_iter, dof_rule=cfg.dof)
    return fit_ols(y, factors, dof_rule=cfg.dof)


def _need(value, what):
    if not value:
        raise InputError(f"missing required input: {what}")
    return value


def _load_model_inputs(cfg: RunConfig):
    panel = io.read_panel(_need(cfg.panel, "--panel"))
    y = io.read_endogenous(_need(cfg.endogenous, "--endogenous"), nodes=panel.nodes)
    r, _ = _choose_r(panel, cfg.factors)
    model, resid = estimate_factor_model(panel, r)
    index = _period_index(panel.periods, y.periods, cfg.frequency.mapping)
    return panel, y, model, index


# ---------------------------------------------------------------- commands


def cmd_ingest(cfg: RunConfig) -> dict:
    records = io.read_flows(_need(cfg.flows, "--flows"))
    try:
        panel = ingest_records(records, cfg.ingest)
    except ValueError as exc:  # unknown labels, bad values
        raise InputError(str(exc)) from exc
    out = Path(cfg.out)
    io.write_panel(panel, out)
    sums = panel.weights.sum(axis=2)
    target = np.where(panel.isolated, 0.0, 1.0)
    sim = cosine_similarity_matrix(panel)
    report = dict(
        kind="ingest_report",
        max_row_sum_deviation=float(np.max(np.abs(sums - target))),
        isolated_rows=int(panel.isolated.sum()),
        layers=panel.layers,
        cosine_similarity=sim,
    )
    if panel.isolated.any():
        log.warning("%d isolated row(s) kept as zero rows", int(panel.isolated.sum()))
    write_json(out / "ingest_report.json", report)
    return report


def cmd_factors(cfg: RunConfig) -> dict:
    panel = io.read_panel(_need(cfg.panel, "--panel"))
    r, rank_info = _choose_r(panel, cfg.factors)
    model, _ = estimate_factor_model(panel, r)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    total, per = variance_explained(panel, model)
    write_json(
        out / "loadings.json",
        dict(
            kind="factor_loadings",
            r=r,
            rank_selection=rank_info,
            layers=panel.layers,
            eigenvalues=model.eigenvalues,
            loadings=model.loadings,
            sign_convention=model.sign_convention,
        ),
    )
    rows = []
    for t, p in enumerate(panel.periods):
        for k in range(r):
            for i, a in enumerate(panel.nodes):
                for j, b in enumerate(panel.nodes):
                    rows.append((p, k + 1, a, b, model.factors[t, i, j, k]))
    pd.DataFrame(rows, columns=["period", "factor", "reporter", "partner", "value"]).to_csv(
        out / "factors.csv", index=False, float_format="%.17g"
    )
    var = pd.DataFrame({"factor": list(range(1, r + 1)) + ["total"], "share": list(per) + [total]})
    var.to_csv(out / "variance.csv", index=False, float_format="%.17g")
    try:
        row_sum, avg_abs = factor_row_sums(model)
        common = True
    except ValueError:
        row_sum, avg_abs = factor_row_sums(model, check=False)
        common = False
    pd.DataFrame(
        {"factor": range(1, r + 1), "row_sum": row_sum, "avg_abs_row_sum": avg_abs, "common_row_sum": common}
    ).to_csv(out / "row_sums.csv", index=False, float_format="%.17g")
    _top_links(panel, model, cfg.factors.top_links).to_csv(out / "top_links.csv", index=False, float_format="%.17g")
    sim = cosine_similarity_matrix(panel)
    pd.DataFrame(sim, index=panel.layers, columns=panel.layers).to_csv(out / "similarity.csv", float_format="%.17g")
    return dict(r=r, variance_total=total)


def _top_links(panel, model, n) -> pd.DataFrame:
    w2 = np.sum(panel.weights**2, axis=(0, 3))  # (N, N)
    contrib = np.sum(model.loadings**2, axis=0) * np.sum(model.factors**2, axis=0)  # (N, N, r)
    rows = []
    with np.errstate(invalid="ignore", divide="ignore"):
        share = contrib / w2[:, :, None]
    N = panel.N
    off = ~np.eye(N, dtype=bool)
    for k in range(model.r):
        s = np.where(off & (w2 > 0), share[:, :, k], -np.inf)
        flat = np.argsort(-s, axis=None, kind="stable")[:n]
        for rank, f in enumerate(flat, start=1):
            i, j = divmod(int(f), N)
            if not np.isfinite(s[i, j]):
                break
            rows.append((k + 1, rank, panel.nodes[i], panel.nodes[j], float(s[i, j])))
    return pd.DataFrame(rows, columns=["factor", "rank", "reporter", "partner", "share"])


def _fit_payload(fit, model, y, index):
    payload = dict(
        kind="fnar_fit",
        mode=fit.mode,
        estimator=fit.estimator,
        nodes=y.nodes,
        names=fit.names(),
        theta=fit.theta,
        std_errors=fit.std_errors,
        beta=fit.beta,
        rho=fit.rho,
        alpha=fit.alpha,
        sigma_nu=fit.sigma_nu,
        dof=fit.dof,
        n_obs=len(y.periods) - 1,
        r=model.r,
    )
    if fit.mode == "homogeneous":
        payload["layer_effects"] = dict(layers=model.layers, values=rescale_to_layers(fit, model))
    return payload


def cmd_estimate(cfg: RunConfig) -> dict:
    panel, y, model, index = _load_model_inputs(cfg)
    fit = _fit(y, _aligned(model, index), cfg.estimate)
    payload = _fit_payload(fit, model, y, index)
    write_json(Path(cfg.out) / "fit.json", payload)
    return payload


def cmd_bootstrap(cfg: RunConfig) -> dict:
    panel, y, model, index = _load_model_inputs(cfg)
    if cfg.estimate.heterogeneous:
        raise InputError("the bootstrap supports homogeneous fits only")
    fit = _fit(y, _aligned(model, index), cfg.estimate)
    bc = cfg.bootstrap
    res = run_bootstrap(panel, y, model, fit, B=bc.B, seed=bc.seed, level=bc.level, period_index=index)
    out = Path(cfg.out)
    payload = dict(
        kind="bootstrap",
        iterations=res.iterations,
        failures=res.failures,
        seed=res.seed,
        level=res.level,
        estimator=fit.estimator,
        point_estimate=dict(zip(fit.names(), fit.theta)),
        summary=res.summary(),
    )
    write_json(out / "bootstrap.json", payload)
    if bc.save_draws:
        pd.DataFrame(res.draws, columns=res.names).to_csv(out / "bootstrap_draws.csv", index=False, float_format="%.17g")
    return payload


def cmd_forecast(cfg: RunConfig) -> dict:
    panel, y, model, index = _load_model_inputs(cfg)
    fc = cfg.forecast
    T = len(y.periods)
    if fc.first_end is not None:
        plan = WindowPlan(fc.first_end, fc.last_end if fc.last_end is not None else T - 2)
    else:
        plan = WindowPlan.last_n(T, fc.n_windows)
    report = run_comparison(
        y,
        _aligned(model, index),
        plan,
        models=fc.models,
        configs=fc.hyperparameters,
        reference=fc.reference,
        dm_lags=fc.dm_lags,
    )
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    ratios = report.mse_ratios()
    ratios.index.name = "node"
    ratios.to_csv(out / "forecast_mse_ratios.csv", float_format="%.17g")
    mse = report.mse()
    mse.index.name = "node"
    mse.to_csv(out / "forecast_mse.csv", float_format="%.17g")
    dm = report.dm_table()
    payload = dict(
        kind="forecast_report",
        benchmark=report.benchmark,
        reference=report.reference,
        models=report.models,
        windows=dict(first_end=plan.first_end, last_end=plan.last_end, targets=report.targets),
        average_mse_ratio=ratios.mean().to_dict(),
        diebold_mariano=dm.to_dict(orient="records"),
    )
    write_json(out / "forecast.json", payload)
    return payload


def cmd_simulate(cfg: RunConfig) -> dict:
    sc = cfg.simulate
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    base1 = SyntheticSpec(N=sc.N, r=sc.r, noise_scale=sc.noise_scale, beta=(0.0,) * sc.r, nu_scale=0.0)
    errs = rate_experiment_prop1(sc.ms, sc.Ts, sc.reps, base1, seed=cfg.seed)
    slopes = slope_table(errs)
    base2 = SyntheticSpec(N=sc.prop2_N, r=sc.r, noise_scale=sc.prop2_noise_scale)
    prop2 = rate_experiment_prop2([tuple(c) for c in sc.prop2_cells], sc.reps, base2, seed=cfg.seed)
    errs.to_csv(out / "prop1_errors.csv", index=False, float_format="%.17g")
    slopes.to_csv(out / "prop1_slopes.csv", index=False, float_format="%.17g")
    prop2.to_csv(out / "prop2_errors.csv", index=False, float_format="%.17g")
    payload = dict(
        kind="simulation",
        seed=cfg.seed,
        prop1_slopes=slopes.to_dict(orient="records"),
        prop2=prop2.to_dict(orient="records"),
    )
    write_json(out / "simulate.json", payload)
    return payload


COMMANDS = {
    "ingest": cmd_ingest,
    "factors": cmd_factors,
    "estimate": cmd_estimate,
    "bootstrap": cmd_bootstrap,
    "forecast": cmd_forecast,
    "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fnar", description="Factor network autoregression toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML or JSON run configuration")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--out", help="output directory")
        if name == "ingest":
            p.add_argument("--flows", help="flow CSV (period,layer,reporter,partner,value)")
        if name != "ingest" and name != "simulate":
            p.add_argument("--panel", help="panel bundle (panel.json or its directory)")
        if name in ("estimate", "bootstrap", "forecast"):
            p.add_argument("--endogenous", help="endogenous CSV (period,node,value)")
        if name in ("factors", "estimate", "bootstrap", "forecast"):
            p.add_argument("--r", help="number of factors or 'auto'")
    return parser


def _error(kind: str, exc: BaseException, code: int) -> int:
    doc = dict(schema_version=SCHEMA_VERSION, error=kind, type=type(exc).__name__, message=str(exc), exit_code=code)
    print(json.dumps(doc), file=sys.stderr)
    return code


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("FNAR_LOG_LEVEL", "WARNING").upper(), format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        overrides = {k: getattr(args, k, None) for k in ("flows", "panel", "endogenous", "out", "seed")}
        cfg = load_config(args.config, overrides)
        r = getattr(args, "r", None)
        if r is not None:
            cfg.factors.r = r if r == "auto" else int(r)
            cfg.validate()
        if args.seed is not None:
            cfg.bootstrap.seed = args.seed
        result = COMMANDS[args.command](cfg)
    except (InputError, OSError) as exc:
        return _error("input", exc, EXIT_INPUT)
    except (ValueError, np.linalg.LinAlgError, ArithmeticError, RuntimeError) as exc:
        return _error("numerical", exc, EXIT_NUMERIC)
    print(json.dumps({"status": "ok", "command": args.command, "out": cfg.out}))
    log.debug("result keys: %s", list(result))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
