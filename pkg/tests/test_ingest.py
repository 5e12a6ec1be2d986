import math
import time

import numpy as np
import pytest

from dynpanel import PanelDataset, build_model_variables, classify, load_csv, write_csv
from dynpanel.ingest import (HEADER, LOWER, SCHEMA, UPPER, VARIABLES, ClassificationError,
                             ClassificationList, FetchError, FetchRequest, IngestError, ParseError,
                             Record, country_codes, fetch_indicators, fetch_panel, read_cache,
                             replication_classification, replication_skeleton, write_cache)
from dynpanel.panel import TransformError


def write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


# --------------------------------------------------------------------------
# Schema and classification


def test_variable_schema():
    labels = [v.label for v in VARIABLES]
    assert labels == list(SCHEMA) and len(set(labels)) == 17
    assert list(HEADER) == ["country", "year"] + labels
    logged = {v.label for v in VARIABLES if v.log_transformed}
    assert logged == {"GNI", "EXPG", "IMPG", "PCT", "FDI", "GFCF"}


def test_replication_lists_partition_94_countries():
    lists = replication_classification()
    assert len(lists.lower) == 48 and len(lists.upper) == 46
    assert len(set(lists.all)) == 94


def test_named_countries_classify_to_income_groups():
    codes = country_codes()
    lists = replication_classification()
    assert lists.group_of(codes["Nigeria"]) == LOWER
    assert lists.group_of(codes["Brazil"]) == UPPER


def test_unclassified_unit_is_rejected():
    p = PanelDataset(["NGA", "DEU"], [2010], {"x": [[1.0], [2.0]]})
    with pytest.raises(ClassificationError, match="DEU"):
        classify(p)


def test_overlapping_lists_are_rejected():
    with pytest.raises(ClassificationError, match="NGA"):
        ClassificationList(("NGA", "GHA"), ("BRA", "NGA"))


def test_skeleton_counts():
    t0 = time.perf_counter()
    panel = replication_skeleton()
    elapsed = time.perf_counter() - t0
    tags = panel.group_tag
    assert panel.n_units * panel.n_periods == 1034
    assert tags.count(UPPER) * panel.n_periods == 506
    assert tags.count(LOWER) * panel.n_periods == 528
    assert panel.periods == tuple(range(2010, 2021))
    assert elapsed < 1.0


# --------------------------------------------------------------------------
# Wide CSV


def test_load_csv_small_file_with_blank(tmp_path):
    path = write(tmp_path, "country,year,a,b\nBBB,2001,1,2\nAAA,2000,3,\nAAA,2001,5,6\n"
                           "BBB,2000,7,8\nAAA,2002,9,10\nBBB,2002,11,12\n")
    p = load_csv(path)
    assert p.units == ("AAA", "BBB") and p.periods == (2000, 2001, 2002)
    assert int((~p.mask("a")).sum() + (~p.mask("b")).sum()) == 1
    assert np.isnan(p["b"][0, 0]) and p["a"][1, 1] == 1.0


def test_load_csv_fills_missing_years(tmp_path):
    p = load_csv(write(tmp_path, "country,year,a\nAAA,2000,1\nAAA,2002,3\n"))
    assert p.periods == (2000, 2001, 2002) and np.isnan(p["a"][0, 1])


def test_load_csv_resolves_country_names(tmp_path):
    p = load_csv(write(tmp_path, "country,year,a\nNigeria,2010,1\n"))
    assert p.units == ("NGA",)


@pytest.mark.parametrize("text, pattern", [
    ("year,country,a\nAAA,2000,1\n", "malformed header"),
    ("country,year\nAAA,2000\n", "malformed header"),
    ("country,year,a\nNGA,2014,1\nNGA,2015,2\nNGA,2015,3\n", r":4: duplicate row for \('NGA', 2015\)"),
    ("country,year,a\nAAA,2000,1\nAAA,2001,x1\n", r":3: non-numeric value 'x1'"),
    ("country,year,a\nAAA,20x0,1\n", r":2: non-integer year"),
    ("country,year,a\nAAA,2000,1,2\n", r":2: expected 3 fields"),
    ("country,year,a\n", "no data rows"),
])
def test_load_csv_errors_name_the_row(tmp_path, text, pattern):
    with pytest.raises(ParseError, match=pattern):
        load_csv(write(tmp_path, text))


def test_write_then_load_is_identity(tmp_path):
    rng = np.random.default_rng(11)
    values = rng.normal(size=(3, 4)) * 1e6
    values[1, 2] = np.nan
    values[0, 0] = 0.1 + 0.2
    p = PanelDataset(["AAA", "BBB", "CCC"], range(2010, 2014),
                     {"a": values, "b": rng.normal(size=(3, 4))})
    write_csv(p, tmp_path / "out.csv")
    assert load_csv(tmp_path / "out.csv").equals(p)


def test_skeleton_header_matches_schema():
    from importlib import resources
    text = resources.files("dynpanel").joinpath("data/replication_skeleton.csv").read_text()
    assert text.splitlines()[0] == ",".join(HEADER)


# --------------------------------------------------------------------------
# Model variables


def raw_panel(**overrides):
    cols = {v.label: np.full((2, 2), 2.0) for v in VARIABLES}
    cols.update({k: np.asarray(v, dtype=float) for k, v in overrides.items()})
    return PanelDataset(["AAA", "BBB"], [2010, 2011], cols)


def test_build_model_variables_logs_and_keeps_raw_columns():
    p = raw_panel(GNI=[[math.exp(10), 1.0], [2.0, 3.0]])
    out = build_model_variables(p)
    assert out["lnGNI"][0, 0] == pytest.approx(10.0, abs=1e-14)
    for name in ["lnGNI", "lnEXPG", "lnIMPG", "lnPCT", "lnFDI", "lnGFCF", "ATCE", "LPI", "TRF"]:
        assert name in out
    for v in VARIABLES:
        assert np.array_equal(out[v.label], p[v.label])


def test_negative_fdi_strict_names_fdi():
    p = raw_panel(FDI=[[-4.07e9, 1.0], [1.0, 1.0]])
    with pytest.raises(TransformError, match="^FDI"):
        build_model_variables(p)


def test_fdi_zero_under_signed_log():
    p = raw_panel(FDI=[[0.0, -4.07e9], [1.0, 1.0]])
    out = build_model_variables(p, overrides={"FDI": "signed_log"})
    assert out["lnFDI"][0, 0] == 0.0
    assert out["lnFDI"][0, 1] == pytest.approx(-math.log1p(4.07e9))
    with pytest.raises(IngestError):
        build_model_variables(p, policy="clip")


def test_missing_source_column():
    p = PanelDataset(["AAA"], [2010], {"GNI": [[1.0]]})
    with pytest.raises(IngestError, match="EXPG"):
        build_model_variables(p)


# --------------------------------------------------------------------------
# Fetch and cache


class FakeTransport:
    """Serves World-Bank-style pages from a dict and counts calls."""

    def __init__(self, values, per_page=None, fail=False):
        self.values = values
        self.per_page = per_page
        self.fail = fail
        self.calls = 0

    def __call__(self, url, params):
        self.calls += 1
        if self.fail:
            raise ConnectionError("network unreachable")
        rows = [{"countryiso3code": c, "date": str(y), "value": v}
                for (c, y), v in sorted(self.values.items())]
        size = self.per_page or max(len(rows), 1)
        pages = max(1, math.ceil(len(rows) / size))
        page = int(params["page"])
        return [{"page": page, "pages": pages}, rows[(page - 1) * size:page * size]]


def test_second_call_served_from_cache(tmp_path):
    t = FakeTransport({("AAA", 2010): 1.5, ("AAA", 2011): None, ("BBB", 2010): 2.0})
    req = FetchRequest("X.Y", ("AAA", "BBB"), 2010, 2011, tmp_path)
    first = fetch_indicators(req, transport=t)
    assert t.calls == 1
    second = fetch_indicators(req, transport=t)
    assert t.calls == 1 and second == first
    assert Record("X.Y", "BBB", 2011, None) in first
    assert fetch_indicators(req, offline=True) == first


def test_cache_file_is_bit_stable(tmp_path):
    t = FakeTransport({("BBB", 2010): 2.0, ("AAA", 2010): 0.1 + 0.2})
    req = FetchRequest("X.Y", ("BBB", "AAA"), 2010, 2010, tmp_path)
    fetch_indicators(req, transport=t)
    before = req.cache_path.read_bytes()
    write_cache(req.cache_path, read_cache(req.cache_path, "X.Y").values())
    assert req.cache_path.read_bytes() == before
    assert read_cache(req.cache_path, "X.Y")[("AAA", 2010)].value == 0.1 + 0.2


def test_empty_country_set(tmp_path):
    t = FakeTransport({})
    assert fetch_indicators(FetchRequest("X.Y", (), 2010, 2011, tmp_path), transport=t) == []
    assert t.calls == 0


def test_paging(tmp_path):
    values = {(c, y): float(y) for c in ("AAA", "BBB", "CCC") for y in range(2010, 2015)}
    t = FakeTransport(values, per_page=4)
    recs = fetch_indicators(FetchRequest("X.Y", ("AAA", "BBB", "CCC"), 2010, 2014, tmp_path),
                            transport=t)
    assert t.calls == 4 and len(recs) == 15 and all(r.value == r.year for r in recs)


def test_offline_miss_and_transport_failure(tmp_path):
    req = FetchRequest("X.Y", ("AAA",), 2010, 2010, tmp_path)
    with pytest.raises(FetchError, match="offline"):
        fetch_indicators(req, offline=True)
    with pytest.raises(FetchError, match="X.Y"):
        fetch_indicators(req, transport=FakeTransport({}, fail=True))


def test_poisoned_cache_names_entry(tmp_path):
    req = FetchRequest("X.Y", ("AAA",), 2010, 2010, tmp_path)
    req.cache_path.write_text(
        '{"country": "AAA", "indicator": "X.Y", "value": "abc", "year": 2010}\n')
    with pytest.raises(ParseError, match=r"cache entry .*X\.Y\.jsonl:1"):
        fetch_indicators(req, offline=True)


def test_malformed_payload_names_indicator(tmp_path):
    req = FetchRequest("X.Y", ("AAA",), 2010, 2010, tmp_path)
    with pytest.raises(ParseError, match="X.Y"):
        fetch_indicators(req, transport=lambda url, params: {"message": "bad"})


def test_cache_dir_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("DYNPANEL_CACHE_DIR", str(tmp_path / "c"))
    req = FetchRequest("X.Y", ("AAA",), 2010, 2010)
    assert req.cache_path == tmp_path / "c" / "X.Y.jsonl"


def test_empty_year_range_rejected():
    with pytest.raises(IngestError):
        FetchRequest("X.Y", ("AAA",), 2011, 2010)


def test_fetch_panel_assembles_wide_panel(tmp_path):
    t = FakeTransport({("AAA", 2010): 5.0, ("BBB", 2011): 7.0})
    p = fetch_panel(["BBB", "AAA"], 2010, 2011, specs=VARIABLES[:2], cache_dir=tmp_path,
                    transport=t)
    assert p.units == ("AAA", "BBB") and p.names == ("GNI", "EXPG")
    assert p["GNI"][0, 0] == 5.0 and p["EXPG"][1, 1] == 7.0 and np.isnan(p["GNI"][0, 1])
