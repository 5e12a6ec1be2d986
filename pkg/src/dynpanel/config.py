"""Run configuration: YAML schema, defaults and validation.

Validation errors name the offending field path (``models[0].columns[2].dependent``)
and, when the configuration came from a file, its line number.

Schema (every section optional except that at least one of ``describe``,
``unit_root``, ``causality`` or ``models`` must be present)::

    data:
      source: csv | synthetic | fetch | skeleton
      csv: path                      # for source: csv (relative to the config file)
      seed: 42                       # for source: synthetic (overridden by --seed)
      years: [2010, 2020]            # synthetic / fetch period range
      classify: true                 # tag units with the bundled income lists
    transform:
      policy: strict | signed_log
      overrides: {FDI: signed_log}
    describe:
      by_group: true
      variables: [GNI, EXPG, ...]    # default: every raw indicator
    unit_root:
      variables: [lnGNI, ...]
      tests: [llc, ips]
      lags: 1
      deterministic: none | intercept | trend
      select_lags: false             # per-unit BIC lag choice
      differences: true              # also test first differences
    causality:
      lags: 1
      harmonize: truncate | per_unit | strict
      flag_threshold: 10000
      pairs: [[cause, effect], ...]
    instruments:                     # defaults for every model block
      max_lag: 3
      collapse: true
      level_lag: 1
      predetermined_max_lag: 2
      predetermined_levels: true     # lagged differences of predetermined regressors
                                     # also instrument the level equations
    regressor_sets:
      name: {endogenous: [...], predetermined: [...], exogenous: [...]}
    models:
      - name: exports                # output file stem
        title: "..."
        group: lower-middle          # optional income-group restriction
        defaults: {dependent: lnEXPG, time_dummies: true}
        variants:   [{regressors: set_name, label: "..."}, ...]
        estimators: [{scheme: difference, step: one}, ...]
        columns:    [...]            # alternative to variants x estimators
        instruments: {...}           # overrides the global defaults
        tests: [ar1, ar2, sargan, hansen, wald, cd]
        wald: [ATCE, lnPCT, ...]     # coefficients tested jointly
    output:
      formats: [text, csv]
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import yaml

from .gmm import ROLES, SCHEMES, STEPS
from .ingest import LOG_POLICIES, VARIABLES
from .unit_root import DETERMINISTICS

SOURCES = ("csv", "synthetic", "fetch", "skeleton")
TESTS = ("ar1", "ar2", "sargan", "hansen", "wald", "cd")
UNIT_ROOT_TESTS = ("llc", "ips")
HARMONIZE = ("truncate", "per_unit", "strict")
FORMATS = ("text", "csv")
TOP_KEYS = ("data", "transform", "describe", "unit_root", "causality", "instruments",
            "regressor_sets", "models", "output")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` is the dotted path of the offending entry."""

    def __init__(self, field: str, message: str, line: Optional[int] = None):
        self.field = field
        self.line = line
        where = f"{field} (line {line})" if line else field
        super().__init__(f"{where}: {message}")


def known_variables() -> List[str]:
    names = []
    for v in VARIABLES:
        names.append(v.label)
        if v.log_transformed:
            names.append(v.model_name)
    return names


# --------------------------------------------------------------------------
# Typed blocks


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"
    csv: Optional[Path] = None
    seed: int = 0
    years: Tuple[int, int] = (2010, 2020)
    classify: bool = True


@dataclass(frozen=True)
class TransformConfig:
    policy: str = "strict"
    overrides: Tuple[Tuple[str, str], ...] = ()


@dataclass(frozen=True)
class DescribeConfig:
    by_group: bool = True
    variables: Tuple[str, ...] = ()


@dataclass(frozen=True)
class UnitRootConfig:
    variables: Tuple[str, ...]
    tests: Tuple[str, ...] = UNIT_ROOT_TESTS
    lags: int = 1
    deterministic: str = "intercept"
    select_lags: bool = False
    differences: bool = True


@dataclass(frozen=True)
class CausalityConfig:
    pairs: Tuple[Tuple[str, str], ...]
    lags: int = 1
    harmonize: str = "truncate"
    flag_threshold: float = 1e4


@dataclass(frozen=True)
class InstrumentConfig:
    max_lag: Optional[int] = 3
    collapse: bool = True
    level_lag: Optional[int] = 1
    predetermined_max_lag: Optional[int] = 2
    predetermined_levels: bool = True


@dataclass(frozen=True)
class ColumnConfig:
    dependent: str
    regressors: Tuple[Tuple[str, str], ...]
    scheme: str = "system"
    step: str = "two"
    time_dummies: bool = True
    windmeijer: bool = True
    label: str = ""


@dataclass(frozen=True)
class ModelConfig:
    name: str
    columns: Tuple[ColumnConfig, ...]
    title: str = ""
    group: Optional[str] = None
    instruments: InstrumentConfig = InstrumentConfig()
    tests: Tuple[str, ...] = ("ar1", "ar2", "sargan", "hansen")
    wald: Tuple[str, ...] = ()


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig = DataConfig()
    transform: TransformConfig = TransformConfig()
    describe: Optional[DescribeConfig] = None
    unit_root: Optional[UnitRootConfig] = None
    causality: Optional[CausalityConfig] = None
    models: Tuple[ModelConfig, ...] = ()
    formats: Tuple[str, ...] = FORMATS
    source_path: Optional[Path] = field(default=None, compare=False)

    def sections(self) -> List[str]:
        out = []
        if self.describe is not None:
            out.append("describe")
        if self.unit_root is not None:
            out.append("unit_root")
        if self.causality is not None:
            out.append("causality")
        if self.models:
            out.append("models")
        return out


# --------------------------------------------------------------------------
# Parsing with field paths


def _line_map(text: str) -> Dict[Tuple, int]:
    """Map every node path of a YAML document to its 1-based line number."""
    out: Dict[Tuple, int] = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return out

    def walk(node, path):
        out[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                walk(v, path + (k.value,))
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                walk(v, path + (i,))

    if root is not None:
        walk(root, ())
    return out


def _fmt_path(path: Tuple) -> str:
    s = ""
    for p in path:
        s += f"[{p}]" if isinstance(p, int) else (f".{p}" if s else str(p))
    return s or "<root>"


class _Parser:
    def __init__(self, lines: Mapping[Tuple, int], base_dir: Optional[Path]):
        self.lines = lines
        self.base_dir = base_dir
        self.variables = set(known_variables())

    def fail(self, path: Tuple, msg: str):
        line = None
        for k in range(len(path), -1, -1):
            if path[:k] in self.lines:
                line = self.lines[path[:k]]
                break
        raise ConfigError(_fmt_path(path), msg, line)

    # primitive readers ----------------------------------------------------

    def mapping(self, obj, path, allowed: Sequence[str]) -> Dict[str, Any]:
        if obj is None:
            return {}
        if not isinstance(obj, dict):
            self.fail(path, "expected a mapping")
        for k in obj:
            if k not in allowed:
                self.fail(path + (k,), f"unknown key; expected one of {', '.join(allowed)}")
        return obj

    def seq(self, obj, path) -> list:
        if not isinstance(obj, list):
            self.fail(path, "expected a list")
        return obj

    def choice(self, obj, path, options) -> str:
        if obj not in options:
            self.fail(path, f"{obj!r} is not one of {', '.join(map(str, options))}")
        return obj

    def boolean(self, obj, path) -> bool:
        if not isinstance(obj, bool):
            self.fail(path, "expected true or false")
        return obj

    def integer(self, obj, path, minimum: Optional[int] = None, nullable=False):
        if obj is None and nullable:
            return None
        if isinstance(obj, bool) or not isinstance(obj, int):
            self.fail(path, "expected an integer")
        if minimum is not None and obj < minimum:
            self.fail(path, f"must be >= {minimum}")
        return obj

    def number(self, obj, path) -> float:
        if isinstance(obj, bool) or not isinstance(obj, (int, float)):
            self.fail(path, "expected a number")
        return float(obj)

    def string(self, obj, path) -> str:
        if not isinstance(obj, str) or not obj:
            self.fail(path, "expected a nonempty string")
        return obj

    def variable(self, obj, path) -> str:
        name = self.string(obj, path)
        if name not in self.variables:
            self.fail(path, f"unknown variable {name!r}")
        return name

    def variables_list(self, obj, path) -> Tuple[str, ...]:
        return tuple(self.variable(v, path + (i,)) for i, v in enumerate(self.seq(obj, path)))

    # sections ---------------------------------------------------------------

    def data(self, obj, path=("data",)) -> DataConfig:
        d = self.mapping(obj, path, ("source", "csv", "seed", "years", "classify"))
        source = self.choice(d.get("source", "synthetic"), path + ("source",), SOURCES)
        csv_path = None
        if source == "csv":
            if "csv" not in d:
                self.fail(path + ("csv",), "required when source is csv")
            csv_path = Path(self.string(d["csv"], path + ("csv",)))
            if not csv_path.is_absolute() and self.base_dir is not None:
                csv_path = self.base_dir / csv_path
        seed = self.integer(d.get("seed", 0), path + ("seed",), 0)
        years = d.get("years", [2010, 2020])
        ys = self.seq(years, path + ("years",))
        if len(ys) != 2:
            self.fail(path + ("years",), "expected [first, last]")
        y0 = self.integer(ys[0], path + ("years", 0))
        y1 = self.integer(ys[1], path + ("years", 1))
        if y1 < y0:
            self.fail(path + ("years",), "last year precedes first year")
        classify = self.boolean(d.get("classify", True), path + ("classify",))
        return DataConfig(source, csv_path, seed, (y0, y1), classify)

    def transform(self, obj, path=("transform",)) -> TransformConfig:
        d = self.mapping(obj, path, ("policy", "overrides"))
        policy = self.choice(d.get("policy", "strict"), path + ("policy",), LOG_POLICIES)
        ov = self.mapping(d.get("overrides"), path + ("overrides",),
                          [v.label for v in VARIABLES if v.log_transformed])
        overrides = tuple(sorted((k, self.choice(v, path + ("overrides", k), LOG_POLICIES))
                                 for k, v in ov.items()))
        return TransformConfig(policy, overrides)

    def describe(self, obj, path=("describe",)) -> DescribeConfig:
        d = self.mapping(obj, path, ("by_group", "variables"))
        by_group = self.boolean(d.get("by_group", True), path + ("by_group",))
        variables = self.variables_list(d["variables"], path + ("variables",)) \
            if "variables" in d else ()
        return DescribeConfig(by_group, variables)

    def unit_root(self, obj, path=("unit_root",)) -> UnitRootConfig:
        d = self.mapping(obj, path, ("variables", "tests", "lags", "deterministic",
                                     "select_lags", "differences"))
        if "variables" not in d:
            self.fail(path + ("variables",), "required")
        tests = tuple(self.choice(t, path + ("tests", i), UNIT_ROOT_TESTS)
                      for i, t in enumerate(self.seq(d.get("tests", list(UNIT_ROOT_TESTS)),
                                                     path + ("tests",))))
        return UnitRootConfig(
            variables=self.variables_list(d["variables"], path + ("variables",)),
            tests=tests,
            lags=self.integer(d.get("lags", 1), path + ("lags",), 0),
            deterministic=self.choice(d.get("deterministic", "intercept"),
                                      path + ("deterministic",), DETERMINISTICS),
            select_lags=self.boolean(d.get("select_lags", False), path + ("select_lags",)),
            differences=self.boolean(d.get("differences", True), path + ("differences",)),
        )

    def causality(self, obj, path=("causality",)) -> CausalityConfig:
        d = self.mapping(obj, path, ("pairs", "lags", "harmonize", "flag_threshold"))
        if "pairs" not in d:
            self.fail(path + ("pairs",), "required")
        pairs = []
        for i, p in enumerate(self.seq(d["pairs"], path + ("pairs",))):
            pp = path + ("pairs", i)
            p = self.seq(p, pp)
            if len(p) != 2:
                self.fail(pp, "expected [cause, effect]")
            pairs.append((self.variable(p[0], pp + (0,)), self.variable(p[1], pp + (1,))))
        if not pairs:
            self.fail(path + ("pairs",), "must not be empty")
        return CausalityConfig(
            pairs=tuple(pairs),
            lags=self.integer(d.get("lags", 1), path + ("lags",), 1),
            harmonize=self.choice(d.get("harmonize", "truncate"), path + ("harmonize",),
                                  HARMONIZE),
            flag_threshold=self.number(d.get("flag_threshold", 1e4), path + ("flag_threshold",)),
        )

    def instruments(self, obj, path, base: InstrumentConfig) -> InstrumentConfig:
        d = self.mapping(obj, path, ("max_lag", "collapse", "level_lag", "predetermined_max_lag",
                                     "predetermined_levels"))
        return InstrumentConfig(
            max_lag=self.integer(d["max_lag"], path + ("max_lag",), 2, nullable=True)
            if "max_lag" in d else base.max_lag,
            collapse=self.boolean(d["collapse"], path + ("collapse",))
            if "collapse" in d else base.collapse,
            level_lag=self.integer(d["level_lag"], path + ("level_lag",), 0, nullable=True)
            if "level_lag" in d else base.level_lag,
            predetermined_max_lag=self.integer(d["predetermined_max_lag"],
                                               path + ("predetermined_max_lag",), 1, nullable=True)
            if "predetermined_max_lag" in d else base.predetermined_max_lag,
            predetermined_levels=self.boolean(d["predetermined_levels"],
                                              path + ("predetermined_levels",))
            if "predetermined_levels" in d else base.predetermined_levels,
        )

    def regressors(self, obj, path, sets: Mapping[str, Tuple[Tuple[str, str], ...]]):
        if isinstance(obj, str):
            if obj not in sets:
                self.fail(path, f"unknown regressor set {obj!r}")
            return sets[obj]
        d = self.mapping(obj, path, ROLES)
        out = []
        for role in d:                      # keep the listed order
            for v in self.variables_list(d[role], path + (role,)):
                out.append((v, role))
        return tuple(out)

    def regressor_sets(self, obj, path=("regressor_sets",)):
        if obj is None:
            return {}
        if not isinstance(obj, dict):
            self.fail(path, "expected a mapping")
        return {name: self.regressors(v, path + (name,), {}) for name, v in obj.items()}

    def column(self, merged: Mapping[str, Any], path, sets) -> ColumnConfig:
        allowed = ("dependent", "regressors", "scheme", "step", "time_dummies", "windmeijer",
                   "label")
        for k in merged:
            if k not in allowed:
                self.fail(path + (k,), f"unknown key; expected one of {', '.join(allowed)}")
        if "dependent" not in merged:
            self.fail(path + ("dependent",), "required")
        dep = self.variable(merged["dependent"], path + ("dependent",))
        regs = self.regressors(merged.get("regressors", {}), path + ("regressors",), sets)
        if dep in [v for v, _ in regs]:
            self.fail(path + ("regressors",), f"dependent {dep!r} listed among regressors")
        return ColumnConfig(
            dependent=dep,
            regressors=regs,
            scheme=self.choice(merged.get("scheme", "system"), path + ("scheme",), SCHEMES),
            step=self.choice(merged.get("step", "two"), path + ("step",), STEPS),
            time_dummies=self.boolean(merged.get("time_dummies", True), path + ("time_dummies",)),
            windmeijer=self.boolean(merged.get("windmeijer", True), path + ("windmeijer",)),
            label=str(merged.get("label", "")),
        )

    def model(self, obj, path, sets, base_inst: InstrumentConfig) -> ModelConfig:
        d = self.mapping(obj, path, ("name", "title", "group", "defaults", "variants",
                                     "estimators", "columns", "instruments", "tests", "wald"))
        name = self.string(d.get("name"), path + ("name",))
        defaults = self.mapping(d.get("defaults"), path + ("defaults",),
                                ("dependent", "regressors", "scheme", "step", "time_dummies",
                                 "windmeijer", "label"))
        cols: List[ColumnConfig] = []
        if "columns" in d:
            if "variants" in d or "estimators" in d:
                self.fail(path + ("columns",), "use either columns or variants x estimators")
            for i, c in enumerate(self.seq(d["columns"], path + ("columns",))):
                c = self.mapping(c, path + ("columns", i), ("dependent", "regressors", "scheme",
                                                            "step", "time_dummies", "windmeijer",
                                                            "label"))
                cols.append(self.column({**defaults, **c}, path + ("columns", i), sets))
        else:
            variants = self.seq(d.get("variants", [{}]), path + ("variants",))
            estimators = self.seq(d.get("estimators", [{}]), path + ("estimators",))
            for (i, v), (j, e) in itertools.product(enumerate(variants), enumerate(estimators)):
                v = self.mapping(v, path + ("variants", i), ("dependent", "regressors", "label",
                                                             "time_dummies"))
                e = self.mapping(e, path + ("estimators", j), ("scheme", "step", "windmeijer"))
                label = v.get("label", defaults.get("label", ""))
                merged = {**defaults, **v, **e, "label": label}
                cols.append(self.column(merged, path + ("variants", i), sets))
        if not cols:
            self.fail(path, "model has no columns")
        tests = tuple(self.choice(t, path + ("tests", i), TESTS)
                      for i, t in enumerate(self.seq(d.get("tests", ["ar1", "ar2", "sargan",
                                                                     "hansen"]),
                                                     path + ("tests",))))
        wald = self.variables_list(d["wald"], path + ("wald",)) if "wald" in d else ()
        if "wald" in tests and not wald:
            self.fail(path + ("wald",), "required when the wald test is selected")
        group = d.get("group")
        if group is not None:
            group = self.string(group, path + ("group",))
        return ModelConfig(
            name=name, columns=tuple(cols), title=str(d.get("title", "")), group=group,
            instruments=self.instruments(d.get("instruments"), path + ("instruments",), base_inst),
            tests=tests, wald=wald,
        )

    def run(self, obj) -> RunConfig:
        d = self.mapping(obj, (), TOP_KEYS)
        sets = self.regressor_sets(d.get("regressor_sets"))
        base_inst = self.instruments(d.get("instruments"), ("instruments",), InstrumentConfig())
        models = tuple(self.model(m, ("models", i), sets, base_inst)
                       for i, m in enumerate(self.seq(d.get("models", []), ("models",))))
        names = [m.name for m in models]
        for i, n in enumerate(names):
            if n in names[:i]:
                self.fail(("models", i, "name"), f"duplicate model name {n!r}")
        out = self.mapping(d.get("output"), ("output",), ("formats",))
        formats = tuple(self.choice(f, ("output", "formats", i), FORMATS)
                        for i, f in enumerate(self.seq(out.get("formats", list(FORMATS)),
                                                       ("output", "formats"))))
        cfg = RunConfig(
            data=self.data(d.get("data")),
            transform=self.transform(d.get("transform")),
            describe=self.describe(d["describe"]) if "describe" in d else None,
            unit_root=self.unit_root(d["unit_root"]) if "unit_root" in d else None,
            causality=self.causality(d["causality"]) if "causality" in d else None,
            models=models,
            formats=formats,
        )
        if not cfg.sections():
            self.fail((), "configuration selects nothing to run "
                          "(need describe, unit_root, causality or models)")
        return cfg


def parse_config(text: str, base_dir: Optional[Path] = None,
                 source_path: Optional[Path] = None) -> RunConfig:
    try:
        obj = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError("<document>", f"YAML syntax error: {exc}",
                          mark.line + 1 if mark else None) from None
    cfg = _Parser(_line_map(text), base_dir).run(obj)
    return RunConfig(**{**cfg.__dict__, "source_path": source_path})


def load_config(path) -> RunConfig:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return parse_config(text, base_dir=path.parent, source_path=path)


def replication_config_text() -> str:
    return resources.files("dynpanel").joinpath("data/replication.yaml").read_text(encoding="utf-8")


def replication_config() -> RunConfig:
    return parse_config(replication_config_text())


__all__ = [
    "ConfigError", "RunConfig", "DataConfig", "TransformConfig", "DescribeConfig",
    "UnitRootConfig", "CausalityConfig", "InstrumentConfig", "ColumnConfig", "ModelConfig",
    "parse_config", "load_config", "replication_config", "replication_config_text",
    "known_variables",
]
