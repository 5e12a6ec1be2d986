"""Replication pipeline: data -> descriptives -> unit roots -> causality -> GMM tables.

Every artifact is a pure function of the configuration and the seed. No
timestamps or host details are written, so repeated runs give byte-identical
output trees.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import diagnostics as dg
from .causality import CausalityError, dh_test
from .config import ColumnConfig, InstrumentConfig, ModelConfig, RunConfig
from .gmm import GmmError, GmmEstimate, GmmStyle, InstrumentPlan, ModelSpec, estimate
from .ingest import (SCHEMA, VARIABLES, build_model_variables, classify, fetch_panel,
                     load_csv, replication_classification, replication_skeleton, write_csv)
from .panel import PanelDataset, PanelError, SeriesTransform, apply_transform, describe, subset_by_group
from .report import (RenderedTable, render_causality_table, render_descriptive_table,
                     render_regression_table, render_unit_root_table)
from .simulate import gen_replication_fixture
from .unit_root import AdfSpec, UnitRootError, ips_test, llc_test

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_VALIDATION, EXIT_ESTIMATION, EXIT_IO = 0, 1, 2, 3


class PipelineError(RuntimeError):
    def __init__(self, message: str, exit_code: int):
        super().__init__(message)
        self.exit_code = exit_code


@dataclass
class RunLog:
    """Deterministic, ordered record of what a run did and what went wrong."""

    entries: List[Tuple[str, str]] = field(default_factory=list)

    def info(self, msg: str) -> None:
        self.entries.append(("info", msg))
        logger.info(msg)

    def warning(self, msg: str) -> None:
        self.entries.append(("warning", msg))
        logger.warning(msg)

    def error(self, msg: str) -> None:
        self.entries.append(("error", msg))
        logger.error(msg)

    def count(self, level: str) -> int:
        return sum(1 for lv, _ in self.entries if lv == level)

    def render(self) -> str:
        lines = [f"[{lv}] {msg}" for lv, msg in self.entries]
        lines.append(f"errors: {self.count('error')}  warnings: {self.count('warning')}")
        return "\n".join(lines) + "\n"


@dataclass
class RunResult:
    exit_code: int
    results: dict
    log: RunLog
    tables: Dict[str, RenderedTable]
    files: List[Path]


# --------------------------------------------------------------------------
# Data


def load_data(cfg: RunConfig, seed: Optional[int] = None, offline: bool = False,
              cache_dir=None, transport=None) -> PanelDataset:
    """Raw indicator panel for the configured source, classified when requested."""
    d = cfg.data
    if d.source == "csv":
        panel = load_csv(d.csv)
    elif d.source == "skeleton":
        panel = replication_skeleton()
    else:
        lists = replication_classification()
        units = sorted(lists.all)
        if d.source == "synthetic":
            groups = [lists.group_of(u) for u in units]
            panel = gen_replication_fixture(units, groups, list(range(d.years[0], d.years[1] + 1)),
                                            d.seed if seed is None else seed)
        else:
            panel = fetch_panel(units, d.years[0], d.years[1], cache_dir=cache_dir,
                                offline=offline, transport=transport)
    if d.classify:
        panel = classify(panel)
    return panel


def model_panel(raw: PanelDataset, cfg: RunConfig) -> PanelDataset:
    return build_model_variables(raw, VARIABLES, cfg.transform.policy,
                                 dict(cfg.transform.overrides))


# --------------------------------------------------------------------------
# Sections


def _finite(x: float):
    return x if math.isfinite(x) else repr(float(x))


def run_describe(panel: PanelDataset, cfg: RunConfig, log: RunLog):
    c = cfg.describe
    variables = list(c.variables) or [v for v in SCHEMA if v in panel]
    rows = describe(panel, by_group=c.by_group and panel.group_tag is not None,
                    variables=variables)
    log.info(f"describe: {len(variables)} variables, {len(rows)} rows")
    table = render_descriptive_table(rows, "Descriptive statistics")
    payload = [{"variable": r.variable, "group": r.group, "obs": r.obs, "mean": r.mean,
                "std": r.std, "min": r.min, "max": r.max} for r in rows]
    return table, payload


def run_unit_root(panel: PanelDataset, cfg: RunConfig, log: RunLog, errors: List[str]):
    c = cfg.unit_root
    spec = AdfSpec(lags=c.lags, deterministic=c.deterministic, select_lags=c.select_lags)
    series = []
    for v in c.variables:
        series.append((v, v, panel))
        if c.differences:
            name = f"D.{v}"
            series.append((name, name, apply_transform(panel, SeriesTransform("diff", v, name))))
    rows, payload = [], []
    fns = {"llc": llc_test, "ips": ips_test}
    for label, col, data in series:
        for t in c.tests:
            try:
                r = fns[t](data, col, spec)
            except UnitRootError as exc:
                log.error(f"unit root {t} {label}: {exc}")
                errors.append("estimation")
                continue
            if r.units_dropped:
                log.warning(f"unit root {t} {label}: dropped units {', '.join(r.units_dropped)}")
            rows.append((label, r))
            payload.append({"variable": label, "test": r.test, "statistic": r.statistic,
                            "pvalue": r.pvalue, "n_units": r.n_units, "n_periods": r.n_periods,
                            "units_dropped": list(r.units_dropped),
                            "unit_stats": [float(s) for s in r.unit_stats]})
    log.info(f"unit root: {len(rows)} tests")
    table = render_unit_root_table(rows, "Panel unit-root tests") if rows else None
    return table, payload


def run_causality(panel: PanelDataset, cfg: RunConfig, log: RunLog, errors: List[str]):
    c = cfg.causality
    results, payload = [], []
    for cause, effect in c.pairs:
        try:
            r = dh_test(panel, cause, effect, c.lags, c.harmonize, c.flag_threshold)
        except CausalityError as exc:
            log.error(f"causality {cause} -> {effect}: {exc}")
            errors.append("estimation")
            continue
        if r.flagged_units:
            log.warning(f"causality {cause} -> {effect}: extreme unit Wald statistics in "
                        f"{', '.join(r.flagged_units)}")
        results.append(r)
        payload.append({"cause": cause, "effect": effect, "w_bar": _finite(r.w_bar),
                        "z_bar": _finite(r.z_bar), "z_bar_pvalue": r.z_bar_pvalue,
                        "z_tilde": _finite(r.z_tilde), "z_tilde_pvalue": r.z_tilde_pvalue,
                        "lags": r.config.lags, "t": r.config.t, "n": r.config.n,
                        "flagged_units": list(r.flagged_units)})
    log.info(f"causality: {len(results)} hypotheses")
    table = render_causality_table(results, "Dumitrescu-Hurlin panel non-causality tests") \
        if results else None
    return table, payload


def instrument_plan(spec: ModelSpec, inst: InstrumentConfig) -> InstrumentPlan:
    """Lagged dependent and endogenous regressors use lags 2..max_lag; predetermined
    regressors 1..predetermined_max_lag (in the level equations only when
    ``predetermined_levels``); exogenous regressors enter IV-style."""
    gmm, iv = [], []
    if spec.lags > 0:
        gmm.append(GmmStyle(spec.dependent, 2, inst.max_lag, inst.collapse))
    for v, role in spec.regressors:
        if role == "exogenous":
            iv.append(v)
        elif role == "endogenous":
            gmm.append(GmmStyle(v, 2, inst.max_lag, inst.collapse))
        else:
            gmm.append(GmmStyle(v, 1, inst.predetermined_max_lag, inst.collapse,
                                inst.predetermined_levels))
    return InstrumentPlan(tuple(gmm), tuple(iv), inst.level_lag)


def _diagnostics(est: GmmEstimate, model: ModelConfig, log: RunLog, where: str):
    runners = {
        "ar1": lambda: dg.ar_test(est, 1),
        "ar2": lambda: dg.ar_test(est, 2),
        "sargan": lambda: dg.sargan(est),
        "hansen": lambda: dg.hansen_j(est),
        "cd": lambda: dg.pesaran_cd(est),
    }
    out = []
    for t in model.tests:
        try:
            if t == "wald":
                names = [n for n in model.wald if n in est.names]
                if not names:
                    continue
                res = dg.wald_joint(est, names)
            else:
                with warnings.catch_warnings():
                    # Hansen on a one-step fit refits two steps; its weight notes
                    # duplicate those already logged for the two-step columns
                    warnings.simplefilter("ignore")
                    res = runners[t]()
        except (dg.DiagnosticError, GmmError, np.linalg.LinAlgError) as exc:
            log.warning(f"{where}: {t} unavailable ({exc})")
            continue
        out.append(res)
        for w in res.warnings:
            log.warning(f"{where}: {res.name}: {w}")
    return out


def _estimate_payload(est: GmmEstimate, col: ColumnConfig, tests) -> dict:
    return {
        "label": col.label, "dependent": col.dependent, "scheme": est.scheme, "step": est.step,
        "windmeijer": est.windmeijer_applied, "names": list(est.names),
        "params": [float(b) for b in est.params],
        "std_errors": [float(s) for s in est.std_errors],
        "omitted": list(est.omitted), "n_obs": est.n_obs, "groups": est.group_count,
        "instruments": est.instrument_count, "instrument_names": list(est.system.instrument_names),
        "warnings": list(est.warnings), "tests": [t.as_dict() for t in tests],
    }


def run_model(panel: PanelDataset, model: ModelConfig, log: RunLog, errors: List[str]):
    data = panel
    if model.group is not None:
        try:
            data = subset_by_group(panel, model.group)
        except PanelError as exc:
            log.error(f"model {model.name}: {exc}")
            errors.append("validation")
            return None, None
    ests, tests, labels, cols_payload = [], [], [], []
    for j, col in enumerate(model.columns, start=1):
        where = f"model {model.name} column ({j})"
        spec = ModelSpec(col.dependent, col.regressors, lags=1, time_dummies=col.time_dummies)
        plan = instrument_plan(spec, model.instruments)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                est = estimate(data, spec, plan, scheme=col.scheme, step=col.step,
                               windmeijer=col.windmeijer)
        except (GmmError, np.linalg.LinAlgError) as exc:
            log.error(f"{where}: {exc}")
            errors.append("estimation")
            continue
        for w in est.warnings:
            log.warning(f"{where}: {w}")
        L, N = est.instrument_count, est.group_count
        if L != est.system.Z.shape[1]:
            log.error(f"{where}: instrument count {L} differs from Z columns")
        if L >= N:
            log.warning(f"{where}: instrument count {L} >= number of groups {N}")
        log.info(f"{where}: {est.label} {col.dependent}, L={L}, N={N}, obs={est.n_obs}")
        t = _diagnostics(est, model, log, where)
        ests.append(est)
        tests.append(t)
        labels.append(f"{est.label} {col.dependent}" + (f" [{col.label}]" if col.label else ""))
        cols_payload.append(_estimate_payload(est, col, t))
    if not ests:
        return None, {"name": model.name, "title": model.title, "group": model.group,
                      "columns": []}
    table = render_regression_table(ests, tests, model.title, labels, allow_mixed=True)
    return table, {"name": model.name, "title": model.title, "group": model.group,
                   "columns": cols_payload}


# --------------------------------------------------------------------------
# Driver


def dumps_results(results: dict) -> str:
    """Sorted-key JSON with shortest round-trip float repr (non-finite as JSON extensions)."""
    return json.dumps(results, sort_keys=True, indent=1) + "\n"


def _write(path: Path, text: str, files: List[Path]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    files.append(path)


def run_pipeline(cfg: RunConfig, out_dir, sections: Optional[Sequence[str]] = None,
                 seed: Optional[int] = None, offline: bool = False, cache_dir=None,
                 transport=None) -> RunResult:
    """Run the selected sections and write tables, ``results.json`` and ``run.log``.

    Returns exit code 0 on success, 2 when any estimation failed. Data and
    I/O failures raise :class:`PipelineError` carrying exit code 1 or 3.
    """
    out = Path(out_dir)
    selected = [s for s in cfg.sections() if sections is None or s in sections]
    log = RunLog()
    errors: List[str] = []
    try:
        raw = load_data(cfg, seed=seed, offline=offline, cache_dir=cache_dir, transport=transport)
        # descriptive statistics use the raw indicators only
        panel = model_panel(raw, cfg) if set(selected) - {"describe"} else raw
    except (OSError,) as exc:
        raise PipelineError(f"data: {exc}", EXIT_IO) from exc
    except ValueError as exc:
        from .ingest import FetchError
        code = EXIT_IO if isinstance(exc, FetchError) else EXIT_VALIDATION
        raise PipelineError(f"data: {exc}", code) from exc
    used_seed = cfg.data.seed if seed is None else seed
    log.info(f"data: source={cfg.data.source}"
             + (f" seed={used_seed}" if cfg.data.source == "synthetic" else "")
             + f", {raw.n_units} units x {raw.n_periods} periods")
    if raw.group_tag is not None:
        for g in raw.groups():
            log.info(f"data: group {g}: {raw.group_tag.count(g)} units")
    results: dict = {"data": {"source": cfg.data.source, "units": list(raw.units),
                              "periods": list(raw.periods),
                              "groups": list(raw.group_tag) if raw.group_tag else None}}
    if cfg.data.source == "synthetic":
        results["data"]["seed"] = used_seed
    tables: Dict[str, RenderedTable] = {}
    try:
        if "describe" in selected:
            t, p = run_describe(raw, cfg, log)
            tables["describe"], results["describe"] = t, p
        if "unit_root" in selected:
            t, p = run_unit_root(panel, cfg, log, errors)
            results["unit_root"] = p
            if t is not None:
                tables["unit_root"] = t
        if "causality" in selected:
            t, p = run_causality(panel, cfg, log, errors)
            results["causality"] = p
            if t is not None:
                tables["causality"] = t
        if "models" in selected:
            results["models"] = []
            for m in cfg.models:
                t, p = run_model(panel, m, log, errors)
                if p is not None:
                    results["models"].append(p)
                if t is not None:
                    tables[f"model_{m.name}"] = t
    except PanelError as exc:
        raise PipelineError(str(exc), EXIT_VALIDATION) from exc

    files: List[Path] = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        if cfg.data.source != "csv":
            write_csv(raw, out / "data.csv")
            files.append(out / "data.csv")
        for name, table in tables.items():
            if "text" in cfg.formats:
                _write(out / f"{name}.txt", table.to_text(), files)
            if "csv" in cfg.formats:
                _write(out / f"{name}.csv", table.to_csv(), files)
        _write(out / "results.json", dumps_results(results), files)
        _write(out / "run.log", log.render(), files)
    except OSError as exc:
        raise PipelineError(f"writing outputs: {exc}", EXIT_IO) from exc
    if "validation" in errors:
        code = EXIT_VALIDATION
    elif errors:
        code = EXIT_ESTIMATION
    else:
        code = EXIT_OK
    return RunResult(code, results, log, tables, files)


__all__ = ["run_pipeline", "load_data", "model_panel", "instrument_plan", "dumps_results",
           "RunLog", "RunResult", "PipelineError", "EXIT_OK", "EXIT_VALIDATION",
           "EXIT_ESTIMATION", "EXIT_IO"]
