"""Plain-text and CSV rendering of descriptive, unit-root, causality and regression tables.

Rendering is a pure function of its inputs: identical results always give
byte-identical text and CSV.
"""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from scipy import stats

from .causality import DhResult
from .diagnostics import TestResult
from .gmm import CONST, GmmEstimate
from .panel import ALL_GROUPS, DescriptiveRow
from .unit_root import UnitRootResult

STAR_LEVELS = ((0.01, "***"), (0.05, "**"), (0.10, "*"))
DECISION_LEVEL = 0.05


class RenderError(ValueError):
    pass


@dataclass(frozen=True)
class RenderedTable:
    """A rectangular grid of formatted cells with a title and a footnote."""

    title: str
    headers: Tuple[str, ...]
    rows: Tuple[Tuple[str, ...], ...]
    footnote: str = ""

    def __post_init__(self):
        object.__setattr__(self, "headers", tuple(self.headers))
        object.__setattr__(self, "rows", tuple(tuple(r) for r in self.rows))
        width = len(self.headers)
        for i, r in enumerate(self.rows):
            if len(r) != width:
                raise RenderError(f"row {i} has {len(r)} cells, expected {width}")

    def column(self, header: str) -> List[str]:
        j = self.headers.index(header)
        return [r[j] for r in self.rows]

    def row(self, label: str) -> Tuple[str, ...]:
        for r in self.rows:
            if r[0] == label:
                return r
        raise KeyError(label)

    def to_text(self) -> str:
        grid = [self.headers] + list(self.rows)
        widths = [max(len(r[j]) for r in grid) for j in range(len(self.headers))]

        def line(r):
            first = r[0].ljust(widths[0])
            rest = [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
            return "  ".join([first] + rest).rstrip()

        rule = "-" * (sum(widths) + 2 * (len(widths) - 1))
        out = [self.title, rule, line(self.headers), rule]
        out += [line(r) for r in self.rows]
        out.append(rule)
        if self.footnote:
            out.append(self.footnote)
        return "\n".join(out) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.headers)
        w.writerows(self.rows)
        return buf.getvalue()


# --------------------------------------------------------------------------
# Number formatting


def format_number(x: float) -> str:
    """Regression-table number style.

    Four significant digits at or above 1 in magnitude, three below, and
    exponent notation below 1e-4.
    """
    if math.isnan(x):
        return "."
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    a = abs(x)
    if a == 0:
        return "0.000"
    if a < 1e-4:
        s = f"{x:.2e}"
    elif a < 1:
        decimals = 2 - int(math.floor(math.log10(a)))
        s = f"{x:.{decimals}f}"
        if abs(float(s)) >= 10.0 ** (3 - decimals):      # rounding crossed a decade
            s = f"{x:.{max(decimals - 1, 3)}f}"
    else:
        digits = int(math.floor(math.log10(a))) + 1
        s = f"{x:.{max(4 - digits, 0)}f}"
    if float(s) == 0:
        s = s.lstrip("-")
    return s


def format_stat(x: float, decimals: int = 4) -> str:
    """Test-statistic style: fixed decimals, exponent notation for huge values."""
    if math.isnan(x):
        return "."
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if abs(x) >= 1e5:
        return f"{x:.2e}"
    s = f"{x:.{decimals}f}"
    return s.lstrip("-") if float(s) == 0 else s


def stars(p: float) -> str:
    for level, mark in STAR_LEVELS:
        if p < level:
            return mark
    return ""


def two_sided_p(z: float) -> float:
    return float(2.0 * stats.norm.sf(abs(z)))


def format_coef(coef: float, se: float, omitted: bool = False) -> Tuple[str, str]:
    """Coefficient cell (with stars) and the parenthesized standard-error cell."""
    if omitted:
        return "0", "(0)"
    if se > 0 and math.isfinite(se):
        p = two_sided_p(coef / se)
    else:
        p = 1.0
    return format_number(coef) + stars(p), f"({format_number(se)})"


# --------------------------------------------------------------------------
# Regression tables


def _row_order(est: GmmEstimate) -> List[str]:
    present = set(est.names) | set(est.omitted)
    order = [n for n in est.spec.lag_names if n in present]
    order += [v for v, _ in est.spec.regressors if v in present]
    dummies = [n for n in present if re.fullmatch(r"yr\d+", n)]
    order += sorted(dummies, key=lambda n: int(n[2:]))
    order += sorted(n for n in present if n not in order and n != CONST)
    if CONST in present:
        order.append(CONST)
    return order


def _test_cell(res: TestResult) -> str:
    return f"{format_stat(res.statistic, 3)} [{format_stat(res.pvalue, 3)}]"


def render_regression_table(
    estimates: Sequence[GmmEstimate],
    tests: Optional[Sequence[Sequence[TestResult]]] = None,
    title: str = "",
    column_labels: Optional[Sequence[str]] = None,
    allow_mixed: bool = False,
    footnote: str = "Standard errors in parentheses; *** p<0.01, ** p<0.05, * p<0.1",
) -> RenderedTable:
    """Coefficients with stars over parenthesized standard errors, one column per estimate.

    Footer rows give observations, groups and instrument counts, followed by
    one row per diagnostic (``statistic [p-value]``). Estimates must share a
    dependent variable unless ``allow_mixed`` is set.
    """
    if not estimates:
        raise RenderError("no estimates to render")
    deps = [e.spec.dependent for e in estimates]
    if not allow_mixed and len(set(deps)) > 1:
        raise RenderError(f"estimates have mixed dependent variables: {sorted(set(deps))}")
    if tests is not None and len(tests) != len(estimates):
        raise RenderError("one list of tests is needed per estimate")
    labels = list(column_labels) if column_labels else [f"{e.label} {e.spec.dependent}"
                                                         for e in estimates]
    if len(labels) != len(estimates):
        raise RenderError("column label count differs from estimate count")
    headers = ["VARIABLE"] + [f"({j}) {lab}" for j, lab in enumerate(labels, start=1)]

    order: List[str] = []
    for e in estimates:
        for n in _row_order(e):
            if n not in order:
                order.append(n)
    if CONST in order:
        order.remove(CONST)
        order.append(CONST)

    rows = []
    for name in order:
        top, bottom = ["Constant" if name == CONST else name], [""]
        for e in estimates:
            if name in e.names:
                c, s = format_coef(e.coef(name), e.se(name))
            elif name in e.omitted:
                c, s = format_coef(0.0, 0.0, omitted=True)
            else:
                c, s = "", ""
            top.append(c)
            bottom.append(s)
        rows += [top, bottom]
    rows.append(["Observations"] + [str(e.n_obs) for e in estimates])
    rows.append(["Number of country"] + [str(e.group_count) for e in estimates])
    rows.append(["No of Instruments"] + [str(e.instrument_count) for e in estimates])
    if tests is not None:
        names: List[str] = []
        for col in tests:
            for t in col:
                if t.name not in names:
                    names.append(t.name)
        for tn in names:
            row = [tn]
            for col in tests:
                match = [t for t in col if t.name == tn]
                row.append(_test_cell(match[0]) if match else "")
            rows.append(row)
    return RenderedTable(title, headers, rows, footnote)


# --------------------------------------------------------------------------
# Causality, unit-root and descriptive tables


def decision(p: float, level: float = DECISION_LEVEL) -> str:
    return "Reject Ho" if p < level else "Fail to reject"


def render_causality_table(results: Sequence[DhResult], title: str = "") -> RenderedTable:
    """One row per non-causality hypothesis; the decision uses the fixed-T Z-bar tilde."""
    if not results:
        raise RenderError("no causality results to render")
    headers = ["Null Hypothesis", "W-bar", "Z-bar", "Prob", "Z-bar tilde", "Prob", "Decision"]
    rows = []
    for r in results:
        rows.append([r.hypothesis, format_stat(r.w_bar), format_stat(r.z_bar),
                     format_stat(r.z_bar_pvalue), format_stat(r.z_tilde),
                     format_stat(r.z_tilde_pvalue), decision(r.z_tilde_pvalue)])
    flagged = [f"{r.cause}->{r.effect}: {', '.join(r.flagged_units)}" for r in results
               if r.flagged_units]
    note = f"K={results[0].config.lags}, T={results[0].config.t}, N={results[0].config.n}"
    if flagged:
        note += "; units with extreme Wald statistics: " + "; ".join(flagged)
    return RenderedTable(title, headers, rows, note)


def render_unit_root_table(results: Sequence[Tuple[str, UnitRootResult]],
                           title: str = "") -> RenderedTable:
    """``results`` pairs a row label (the tested series) with its result."""
    if not results:
        raise RenderError("no unit-root results to render")
    headers = ["Variable", "Test", "Statistic", "Prob", "Units", "Periods", "Decision"]
    rows = []
    for label, r in results:
        rows.append([label, r.test, format_stat(r.statistic), format_stat(r.pvalue),
                     str(r.n_units), str(r.n_periods),
                     "Stationary" if r.pvalue < DECISION_LEVEL else "Unit root"])
    return RenderedTable(title, headers, rows,
                         "H0: all panels contain unit roots; lower-tail normal p-values")


def _g7(x: float) -> str:
    return f"{x:.7g}"


def render_descriptive_table(rows: Sequence[DescriptiveRow], title: str = "") -> RenderedTable:
    """Obs/Mean/Std. Dev./Min/Max blocks side by side, one block per group."""
    if not rows:
        raise RenderError("no descriptive rows to render")
    groups: List[str] = []
    variables: List[str] = []
    cells: Dict[Tuple[str, str], DescriptiveRow] = {}
    for r in rows:
        if r.group not in groups:
            groups.append(r.group)
        if r.variable not in variables:
            variables.append(r.variable)
        cells[(r.variable, r.group)] = r
    headers = ["Variable"]
    for g in groups:
        tag = "" if len(groups) == 1 and g == ALL_GROUPS else f" [{g}]"
        headers += [f"{h}{tag}" for h in ("Obs", "Mean", "Std. Dev.", "Min", "Max")]
    out = []
    for v in variables:
        line = [v]
        for g in groups:
            r = cells.get((v, g))
            line += ([str(r.obs), _g7(r.mean), _g7(r.std), _g7(r.min), _g7(r.max)]
                     if r else [""] * 5)
        out.append(line)
    return RenderedTable(title, headers, out, "")


__all__ = [
    "RenderedTable", "RenderError", "format_number", "format_stat", "format_coef", "stars",
    "two_sided_p", "decision", "render_regression_table", "render_causality_table",
    "render_unit_root_table", "render_descriptive_table",
]
