"""Immutable rectangular panel container and series transforms.

A :class:`PanelDataset` stores every variable as an ``(n_units, n_periods)``
float array with ``NaN`` marking missing cells. All operations return new
datasets; arrays are frozen read-only on construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np


class PanelError(ValueError):
    """Raised for malformed panels or invalid panel operations."""


class TransformError(PanelError):
    """Raised when a series transform cannot be applied."""


def _frozen(values: np.ndarray) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False, repr=False)
class PanelDataset:
    """Unit x period x variable panel.

    Parameters
    ----------
    units : sequence of str
        Unit identifiers (ISO alpha-3 codes for country panels).
    periods : sequence of int
        Contiguous ascending integer periods (calendar years).
    variables : mapping of str to array_like
        Each value is an ``(len(units), len(periods))`` array; ``NaN`` is missing.
    group_tag : sequence of str, optional
        Per-unit group label (income class).
    meta : mapping, optional
        Free-form provenance (for simulated panels, the true parameters).
    """

    units: Tuple[str, ...]
    periods: Tuple[int, ...]
    variables: Mapping[str, np.ndarray]
    group_tag: Optional[Tuple[str, ...]] = None
    meta: Mapping[str, object] = field(default_factory=dict)
    _order: Tuple[str, ...] = field(default=(), repr=False, compare=False)

    def __init__(self, units, periods, variables, group_tag=None, meta=None):
        units = tuple(str(u) for u in units)
        periods = tuple(int(p) for p in periods)
        if len(set(units)) != len(units):
            raise PanelError("units must be unique")
        if len(set(periods)) != len(periods):
            raise PanelError("periods must be unique")
        if periods and list(periods) != list(range(periods[0], periods[0] + len(periods))):
            raise PanelError("periods must be contiguous ascending integers")
        shape = (len(units), len(periods))
        cols: Dict[str, np.ndarray] = {}
        for name, values in variables.items():
            arr = _frozen(values)
            if arr.shape != shape:
                raise PanelError(
                    f"variable {name!r} has shape {arr.shape}, expected {shape}"
                )
            cols[str(name)] = arr
        if group_tag is not None:
            group_tag = tuple(str(g) for g in group_tag)
            if len(group_tag) != len(units):
                raise PanelError("group_tag must label every unit")
        object.__setattr__(self, "units", units)
        object.__setattr__(self, "periods", periods)
        object.__setattr__(self, "variables", cols)
        object.__setattr__(self, "group_tag", group_tag)
        object.__setattr__(self, "meta", dict(meta or {}))
        object.__setattr__(self, "_order", tuple(cols))

    def __repr__(self) -> str:
        return (f"PanelDataset(units={self.n_units}, periods={self.periods[0]}..{self.periods[-1]}, "
                f"variables={list(self._order)})") if self.periods else "PanelDataset(empty)"

    @property
    def n_units(self) -> int:
        return len(self.units)

    @property
    def n_periods(self) -> int:
        return len(self.periods)

    @property
    def names(self) -> Tuple[str, ...]:
        return self._order

    def __contains__(self, name: str) -> bool:
        return name in self.variables

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.variables[name]
        except KeyError:
            raise PanelError(f"unknown variable {name!r}") from None

    def mask(self, name: str) -> np.ndarray:
        """Boolean array, True where the cell is observed."""
        return ~np.isnan(self[name])

    def groups(self) -> List[str]:
        if self.group_tag is None:
            return []
        seen: List[str] = []
        for g in self.group_tag:
            if g not in seen:
                seen.append(g)
        return seen

    def with_variables(self, new: Mapping[str, np.ndarray]) -> "PanelDataset":
        cols = dict(self.variables)
        cols.update(new)
        return PanelDataset(self.units, self.periods, cols, self.group_tag, self.meta)

    def with_groups(self, group_tag: Sequence[str]) -> "PanelDataset":
        return PanelDataset(self.units, self.periods, self.variables, group_tag, self.meta)

    def select_units(self, index: Sequence[int]) -> "PanelDataset":
        index = list(index)
        tags = None if self.group_tag is None else [self.group_tag[i] for i in index]
        return PanelDataset(
            [self.units[i] for i in index],
            self.periods,
            {k: v[index] for k, v in self.variables.items()},
            tags,
            self.meta,
        )

    def select_periods(self, start: int, stop: int) -> "PanelDataset":
        """Restrict to periods in ``[start, stop]`` inclusive."""
        idx = [j for j, p in enumerate(self.periods) if start <= p <= stop]
        if not idx:
            raise PanelError(f"no periods in [{start}, {stop}]")
        return PanelDataset(
            self.units,
            [self.periods[j] for j in idx],
            {k: v[:, idx] for k, v in self.variables.items()},
            self.group_tag,
            self.meta,
        )

    def to_long(self) -> List[Tuple[str, int, Dict[str, float]]]:
        rows = []
        for i, u in enumerate(self.units):
            for j, p in enumerate(self.periods):
                rows.append((u, p, {k: float(self.variables[k][i, j]) for k in self._order}))
        return rows

    def equals(self, other: "PanelDataset") -> bool:
        if (self.units, self.periods, self.group_tag) != (
            other.units, other.periods, other.group_tag
        ):
            return False
        if set(self.variables) != set(other.variables):
            return False
        return all(
            np.array_equal(self.variables[k], other.variables[k], equal_nan=True)
            for k in self.variables
        )


TRANSFORM_KINDS = ("log", "signed_log", "lag", "diff")


@dataclass(frozen=True)
class SeriesTransform:
    """A single column transform.

    ``kind`` is one of ``log`` (natural log), ``signed_log``
    (``sign(x) * log(1 + |x|)``), ``lag`` or ``diff`` (first difference).
    """

    kind: str
    source: str
    output: str
    order: int = 1

    def __post_init__(self):
        if self.kind not in TRANSFORM_KINDS:
            raise TransformError(f"unknown transform kind {self.kind!r}")
        if self.order < 1:
            raise TransformError("lag order must be >= 1")
        if self.output == self.source:
            raise TransformError("transform output must differ from its source")


def signed_log(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.log1p(np.abs(x))


def lag(values: np.ndarray, k: int = 1) -> np.ndarray:
    """Shift each unit's series ``k`` periods forward; head cells become NaN."""
    out = np.full_like(values, np.nan, dtype=float)
    if k < values.shape[1]:
        out[:, k:] = values[:, :-k]
    return out


def diff(values: np.ndarray, k: int = 1) -> np.ndarray:
    return values - lag(values, k)


def apply_transform(panel: PanelDataset, t: SeriesTransform) -> PanelDataset:
    """Return ``panel`` with the transformed column appended.

    Non-positive values under ``log`` raise :class:`TransformError` naming the
    first offending unit, period and value.
    """
    src = panel[t.source]
    if t.kind == "log":
        bad = ~np.isnan(src) & (src <= 0)
        if bad.any():
            i, j = map(int, np.argwhere(bad)[0])
            raise TransformError(
                f"log of non-positive value {float(src[i, j])!r} in {t.source!r} "
                f"at unit {panel.units[i]!r}, period {panel.periods[j]}"
            )
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.log(src)
    elif t.kind == "signed_log":
        out = signed_log(src)
    elif t.kind == "lag":
        out = lag(src, t.order)
    else:
        out = diff(src, t.order)
    return panel.with_variables({t.output: out})


def apply_transforms(panel: PanelDataset, transforms: Iterable[SeriesTransform]) -> PanelDataset:
    for t in transforms:
        panel = apply_transform(panel, t)
    return panel


@dataclass(frozen=True)
class DescriptiveRow:
    variable: str
    group: str
    obs: int
    mean: float
    std: float
    min: float
    max: float


ALL_GROUPS = "all"


def _describe_values(name: str, group: str, values: np.ndarray) -> DescriptiveRow:
    v = values[~np.isnan(values)]
    if v.size == 0:
        raise PanelError(f"variable {name!r} has no observed cells in group {group!r}")
    std = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
    return DescriptiveRow(name, group, int(v.size), float(np.mean(v)), std,
                          float(np.min(v)), float(np.max(v)))


def describe(
    panel: PanelDataset,
    by_group: bool = False,
    variables: Optional[Sequence[str]] = None,
) -> List[DescriptiveRow]:
    """Descriptive statistics over observed cells.

    Rows are ordered by variable, then by group (the pooled ``"all"`` group
    first when ``by_group`` is set). Standard deviations use ``n - 1``.
    """
    names = list(variables) if variables is not None else list(panel.names)
    empty = [n for n in names if not panel.mask(n).any()]
    if empty:
        raise PanelError(f"variables entirely missing: {', '.join(empty)}")
    rows = []
    groups = panel.groups() if by_group else []
    if by_group and not groups:
        raise PanelError("panel has no group tags")
    tags = np.array(panel.group_tag) if groups else None
    for name in names:
        values = panel[name]
        rows.append(_describe_values(name, ALL_GROUPS, values))
        for g in groups:
            rows.append(_describe_values(name, g, values[tags == g]))
    return rows


def subset_by_group(panel: PanelDataset, label: str) -> PanelDataset:
    if panel.group_tag is None or label not in panel.group_tag:
        raise PanelError(f"unknown group label {label!r}")
    return panel.select_units([i for i, g in enumerate(panel.group_tag) if g == label])
