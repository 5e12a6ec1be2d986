"""Data loading: wide CSV panels, income classification, model variables, indicator fetch.

The wide CSV schema is one row per ``(country, year)`` with one column per
indicator; blank cells are missing. Indicator downloads go through a
line-oriented JSON cache so replication runs can be repeated offline.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import threading
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .panel import PanelDataset, PanelError, SeriesTransform, TransformError, apply_transform

logger = logging.getLogger(__name__)

SCHEMA = ("GNI", "EXPG", "IMPG", "ATCE", "PCT", "AFT", "QPI", "LPIAC", "LPICQ", "LPIEA",
          "LPIEC", "LPIFS", "LPI", "LPIQTT", "TRF", "FDI", "GFCF")
HEADER = ("country", "year") + SCHEMA
LOWER, UPPER = "lower-middle", "upper-middle"
CACHE_ENV = "DYNPANEL_CACHE_DIR"
LOG_POLICIES = ("strict", "signed_log")


class IngestError(ValueError):
    pass


class ClassificationError(IngestError):
    pass


class FetchError(IngestError):
    pass


class ParseError(IngestError):
    pass


@dataclass(frozen=True)
class VariableSpec:
    label: str
    source: str
    units: str
    log_transformed: bool = False
    indicator: Optional[str] = None

    @property
    def model_name(self) -> str:
        return f"ln{self.label}" if self.log_transformed else self.label


VARIABLES: Tuple[VariableSpec, ...] = (
    VariableSpec("GNI", "GNI", "current international $ (PPP, per capita)", True, "NY.GNP.PCAP.PP.CD"),
    VariableSpec("EXPG", "EXPG", "current US$", True, "BX.GSR.MRCH.CD"),
    VariableSpec("IMPG", "IMPG", "current US$", True, "BM.GSR.MRCH.CD"),
    VariableSpec("ATCE", "ATCE", "days", False, "IC.CUS.DURS.EX"),
    VariableSpec("PCT", "PCT", "TEU", True, "IS.SHP.GOOD.TU"),
    VariableSpec("AFT", "AFT", "million ton-km", False, "IS.AIR.GOOD.MT.K1"),
    VariableSpec("QPI", "QPI", "index 1-7", False, "IQ.WEF.PORT.XQ"),
    VariableSpec("LPIAC", "LPIAC", "index 1-5", False, "LP.LPI.TRAC.XQ"),
    VariableSpec("LPICQ", "LPICQ", "index 1-5", False, "LP.LPI.LOGS.XQ"),
    VariableSpec("LPIEA", "LPIEA", "index 1-5", False, "LP.LPI.ITRN.XQ"),
    VariableSpec("LPIEC", "LPIEC", "index 1-5", False, "LP.LPI.CUST.XQ"),
    VariableSpec("LPIFS", "LPIFS", "index 1-5", False, "LP.LPI.TIME.XQ"),
    VariableSpec("LPI", "LPI", "index 1-5", False, "LP.LPI.OVRL.XQ"),
    VariableSpec("LPIQTT", "LPIQTT", "index 1-5", False, "LP.LPI.INFR.XQ"),
    VariableSpec("TRF", "TRF", "percent", False, "TM.TAX.MRCH.WM.AR.ZS"),
    VariableSpec("FDI", "FDI", "current US$", True, "BN.KLT.DINV.CD"),
    VariableSpec("GFCF", "GFCF", "current US$", True, "NE.GDI.FTOT.CD"),
)


def variable_spec(label: str) -> VariableSpec:
    for v in VARIABLES:
        if v.label == label:
            return v
    raise IngestError(f"unknown variable label {label!r}")


def model_variable_names(specs: Sequence[VariableSpec] = VARIABLES) -> List[str]:
    return [v.model_name for v in specs]


# --------------------------------------------------------------------------
# Country classification


@dataclass(frozen=True)
class ClassificationList:
    lower: Tuple[str, ...]
    upper: Tuple[str, ...]

    def __post_init__(self):
        both = set(self.lower) & set(self.upper)
        if both:
            raise ClassificationError(f"countries in both lists: {', '.join(sorted(both))}")

    @property
    def all(self) -> Tuple[str, ...]:
        return self.lower + self.upper

    def group_of(self, code: str) -> str:
        if code in self.lower:
            return LOWER
        if code in self.upper:
            return UPPER
        raise ClassificationError(f"unit {code!r} is in neither income list")


def _country_rows() -> List[Dict[str, str]]:
    text = resources.files("dynpanel").joinpath("data/countries.csv").read_text(encoding="utf-8")
    return list(csv.DictReader(io.StringIO(text)))


def country_codes() -> Dict[str, str]:
    """Country name to ISO alpha-3 code for the bundled country list."""
    return {r["name"]: r["code"] for r in _country_rows()}


def replication_classification() -> ClassificationList:
    rows = _country_rows()
    return ClassificationList(
        tuple(r["code"] for r in rows if r["group"] == LOWER),
        tuple(r["code"] for r in rows if r["group"] == UPPER),
    )


def classify(panel: PanelDataset, lists: Optional[ClassificationList] = None) -> PanelDataset:
    """Tag every unit with its income group."""
    lists = lists or replication_classification()
    unknown = [u for u in panel.units if u not in lists.lower and u not in lists.upper]
    if unknown:
        raise ClassificationError(f"unclassified unit(s): {', '.join(unknown)}")
    tags = [lists.group_of(u) for u in panel.units]
    logger.info("classified %d units: %d %s, %d %s", len(tags), tags.count(LOWER), LOWER,
                tags.count(UPPER), UPPER)
    return panel.with_groups(tags)


# --------------------------------------------------------------------------
# Wide CSV


def _resolve_country(value: str, names: Mapping[str, str]) -> str:
    value = value.strip()
    return names.get(value, value)


def load_csv(path, resolve_names: bool = True) -> PanelDataset:
    """Read a wide ``country,year,<variables...>`` CSV into a panel.

    Years missing for every country are filled as missing cells so the
    period axis is contiguous. Country names from the bundled list are
    mapped to their codes.
    """
    names = country_codes() if resolve_names else {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if header[:2] != ["country", "year"] or len(header) < 3:
            raise ParseError(f"{path}: malformed header; expected 'country,year,<variables>'")
        variables = header[2:]
        if len(set(variables)) != len(variables) or any(not v for v in variables):
            raise ParseError(f"{path}: duplicate or empty variable names in header")
        cells: Dict[Tuple[str, int], List[float]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            country = _resolve_country(row[0], names)
            try:
                year = int(row[1])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-integer year {row[1]!r}") from None
            if (country, year) in cells:
                raise ParseError(f"{path}:{lineno}: duplicate row for ({country!r}, {year})")
            values = []
            for name, raw in zip(variables, row[2:]):
                raw = raw.strip()
                if not raw:
                    values.append(math.nan)
                    continue
                try:
                    values.append(float(raw))
                except ValueError:
                    raise ParseError(
                        f"{path}:{lineno}: non-numeric value {raw!r} in column {name!r}"
                    ) from None
            cells[(country, year)] = values
    if not cells:
        raise ParseError(f"{path}: no data rows")
    units = sorted({c for c, _ in cells})
    years = sorted({y for _, y in cells})
    periods = list(range(years[0], years[-1] + 1))
    arrays = {v: np.full((len(units), len(periods)), np.nan) for v in variables}
    uix = {u: i for i, u in enumerate(units)}
    for (c, y), values in cells.items():
        for v, x in zip(variables, values):
            arrays[v][uix[c], y - periods[0]] = x
    return PanelDataset(units, periods, arrays)


def _fmt(x: float) -> str:
    return "" if math.isnan(x) else repr(float(x))


def write_csv(panel: PanelDataset, path, variables: Optional[Sequence[str]] = None) -> None:
    """Write a panel in the wide schema; floats use shortest round-trip repr."""
    variables = list(variables) if variables is not None else list(panel.names)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["country", "year"] + variables)
        for i, u in enumerate(panel.units):
            for j, p in enumerate(panel.periods):
                w.writerow([u, p] + [_fmt(panel[v][i, j]) for v in variables])


def replication_skeleton() -> PanelDataset:
    """The bundled 94-country x 2010-2020 panel frame with every indicator missing."""
    path = resources.files("dynpanel").joinpath("data/replication_skeleton.csv")
    with resources.as_file(path) as p:
        return classify(load_csv(p, resolve_names=False))


# --------------------------------------------------------------------------
# Model variables


def build_model_variables(panel: PanelDataset, specs: Sequence[VariableSpec] = VARIABLES,
                          policy: str = "strict",
                          overrides: Optional[Mapping[str, str]] = None) -> PanelDataset:
    """Add ``ln<label>`` columns for log-transformed variables.

    ``policy`` is ``strict`` (non-positive values raise) or ``signed_log``;
    ``overrides`` sets the policy per label. Raw columns are left untouched.
    """
    overrides = dict(overrides or {})
    for p in [policy] + list(overrides.values()):
        if p not in LOG_POLICIES:
            raise IngestError(f"unknown log policy {p!r}")
    missing = [s.source for s in specs if s.source not in panel]
    if missing:
        raise IngestError(f"source column(s) missing: {', '.join(missing)}")
    for s in specs:
        if not s.log_transformed:
            continue
        kind = "log" if overrides.get(s.label, policy) == "strict" else "signed_log"
        try:
            panel = apply_transform(panel, SeriesTransform(kind, s.source, s.model_name))
        except TransformError as exc:
            raise TransformError(f"{s.label}: {exc}") from None
    return panel


# --------------------------------------------------------------------------
# Indicator fetch with cache


API_URL = "https://api.worldbank.org/v2/country/{countries}/indicator/{indicator}"


@dataclass(frozen=True)
class FetchRequest:
    indicator: str
    countries: Tuple[str, ...]
    start: int
    end: int
    cache_dir: Optional[Path] = None

    def __post_init__(self):
        object.__setattr__(self, "countries", tuple(self.countries))
        if self.end < self.start:
            raise IngestError("year range is empty")

    @property
    def cache_path(self) -> Path:
        base = Path(self.cache_dir) if self.cache_dir else default_cache_dir()
        return base / f"{self.indicator}.jsonl"


@dataclass(frozen=True)
class Record:
    indicator: str
    country: str
    year: int
    value: Optional[float]


def default_cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV)
    return Path(env) if env else Path.home() / ".cache" / "dynpanel"


_cache_lock = threading.Lock()


def _record_line(r: Record) -> str:
    return json.dumps({"country": r.country, "indicator": r.indicator, "value": r.value,
                       "year": r.year}, sort_keys=True)


def read_cache(path: Path, indicator: str) -> Dict[Tuple[str, int], Record]:
    out: Dict[Tuple[str, int], Record] = {}
    if not path.exists():
        return out
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
                value = obj["value"]
                if value is not None and (isinstance(value, bool) or not isinstance(value, (int, float))):
                    raise TypeError(value)
                rec = Record(str(obj["indicator"]), str(obj["country"]), int(obj["year"]),
                             None if value is None else float(value))
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(f"cache entry {where} for {indicator}: invalid record ({exc!r})") from None
            if rec.indicator != indicator:
                raise ParseError(f"cache entry {where}: indicator {rec.indicator!r} != {indicator!r}")
            out[(rec.country, rec.year)] = rec
    return out


def write_cache(path: Path, records: Iterable[Record]) -> None:
    """Rewrite the whole cache file sorted by key (single writer, atomic rename)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = sorted({(r.country, r.year): _record_line(r) for r in records}.items())
    tmp = path.with_suffix(".jsonl.tmp")
    tmp.write_text("".join(line + "\n" for _, line in lines), encoding="utf-8")
    tmp.replace(path)


Transport = Callable[[str, Mapping[str, object]], object]


def _requests_transport(url: str, params: Mapping[str, object]) -> object:
    import requests

    resp = requests.get(url, params=dict(params), timeout=60)
    resp.raise_for_status()
    return resp.json()


def _parse_page(payload: object, indicator: str) -> Tuple[int, List[Record]]:
    try:
        meta, rows = payload
        pages = int(meta["pages"])
        out = []
        for row in rows or []:
            value = row["value"]
            out.append(Record(indicator, str(row["countryiso3code"]), int(row["date"]),
                              None if value is None else float(value)))
        return pages, out
    except (TypeError, ValueError, KeyError) as exc:
        raise ParseError(f"malformed payload for indicator {indicator}: {exc!r}") from None


def fetch_indicators(req: FetchRequest, offline: bool = False,
                     transport: Optional[Transport] = None) -> List[Record]:
    """Records for every requested ``(country, year)``; missing values are ``None``.

    Requests fully covered by the cache never touch the network. Fetched
    records, including empty ones, are merged into the cache.
    """
    if not req.countries:
        return []
    wanted = [(c, y) for c in req.countries for y in range(req.start, req.end + 1)]
    path = req.cache_path
    with _cache_lock:
        cached = read_cache(path, req.indicator)
    if all(k in cached for k in wanted):
        return [cached[k] for k in wanted]
    if offline:
        raise FetchError(f"{req.indicator}: cache miss in offline mode ({path})")
    transport = transport or _requests_transport
    url = API_URL.format(countries=";".join(req.countries), indicator=req.indicator)
    fetched: Dict[Tuple[str, int], Record] = {}
    page, pages = 1, 1
    while page <= pages:
        params = {"format": "json", "date": f"{req.start}:{req.end}", "per_page": 20000,
                  "page": page}
        try:
            payload = transport(url, params)
        except ParseError:
            raise
        except Exception as exc:
            raise FetchError(f"{req.indicator}: transport failure: {exc}") from exc
        pages, rows = _parse_page(payload, req.indicator)
        for r in rows:
            fetched[(r.country, r.year)] = r
        page += 1
    for k in wanted:
        fetched.setdefault(k, Record(req.indicator, k[0], k[1], None))
    with _cache_lock:
        merged = read_cache(path, req.indicator)
        merged.update(fetched)
        write_cache(path, merged.values())
    return [fetched[k] for k in wanted]


def fetch_panel(countries: Sequence[str], start: int, end: int,
                specs: Sequence[VariableSpec] = VARIABLES, cache_dir=None, offline: bool = False,
                transport: Optional[Transport] = None) -> PanelDataset:
    """Assemble a raw wide panel by fetching every indicator in ``specs``."""
    units = sorted(countries)
    periods = list(range(start, end + 1))
    arrays = {}
    for s in specs:
        if not s.indicator:
            raise IngestError(f"{s.label} has no indicator code")
        req = FetchRequest(s.indicator, tuple(units), start, end,
                           Path(cache_dir) if cache_dir else None)
        arr = np.full((len(units), len(periods)), np.nan)
        uix = {u: i for i, u in enumerate(units)}
        for r in fetch_indicators(req, offline=offline, transport=transport):
            if r.value is not None and r.country in uix:
                arr[uix[r.country], r.year - start] = r.value
        arrays[s.label] = arr
    return PanelDataset(units, periods, arrays)


__all__ = [
    "SCHEMA", "HEADER", "LOWER", "UPPER", "VARIABLES", "VariableSpec", "ClassificationList",
    "FetchRequest", "Record", "IngestError", "ClassificationError", "FetchError", "ParseError",
    "PanelError", "load_csv", "write_csv", "classify", "build_model_variables",
    "fetch_indicators", "fetch_panel", "replication_classification", "replication_skeleton",
    "country_codes", "variable_spec", "model_variable_names", "default_cache_dir",
]
