import io
import json
import logging
import random

import pytest

from commune.errors import CommuneError, ParseError
from commune.graph import build_graph
from commune.ingest import (
    CityConfig,
    ODRecord,
    build_tract_index,
    parse_income_csv,
    parse_od_csv,
    write_income_csv,
    write_od_csv,
)

HEADER = "w_geocode,h_geocode,S000\n"


def od(text):
    return io.StringIO(HEADER + text)


def test_block_to_tract_prefix():
    recs = parse_od_csv(od("360610002001002,360610001001001,3\n"))
    assert recs == [ODRecord("36061000100", "36061000200", 3.0)]


def test_same_tract_pair_aggregated():
    recs = parse_od_csv(od("360610002001002,360610001001001,2\n360610002009999,360610001005555,5\n"))
    assert recs == [ODRecord("36061000100", "36061000200", 7.0)]


def test_negative_flow_reports_line():
    with pytest.raises(ParseError, match="line 3"):
        parse_od_csv(od("360610002001002,360610001001001,2\n360610002001002,360610001001001,-1\n"))


def test_non_numeric_flow_reports_line():
    with pytest.raises(ParseError, match="line 2"):
        parse_od_csv(od("360610002001002,360610001001001,many\n"))


def test_short_geoid_rejected():
    with pytest.raises(ParseError, match="line 2"):
        parse_od_csv(od("3606,360610001001001,1\n"))


def test_missing_column():
    with pytest.raises(ParseError, match="line 1"):
        parse_od_csv(io.StringIO("a,b\n1,2\n"))


def test_income_values_and_sentinels():
    t = parse_income_csv(io.StringIO("geoid,median_household_income\n36061000100,85000\n36061000200,-666666666\n36061000300,\n"))
    assert t.get("36061000100") == 85000.0
    assert "36061000200" in t.missing and "36061000300" in t.missing
    assert "36061000200" not in t


def test_empty_income_file_warns(caplog):
    with caplog.at_level(logging.WARNING):
        t = parse_income_csv(io.StringIO(""))
    assert len(t) == 0
    assert caplog.records


def test_malformed_income_row():
    with pytest.raises(ParseError, match="line 2"):
        parse_income_csv(io.StringIO("geoid,median_household_income\n36061000100,lots\n"))


def test_income_round_trip(tmp_path):
    t = parse_income_csv(io.StringIO("geoid,median_household_income\n1,10\n2,NA\n"))
    write_income_csv(t, tmp_path / "i.csv")
    back = parse_income_csv(tmp_path / "i.csv")
    assert back.values == t.values and back.missing == t.missing


def test_tract_index():
    assert build_tract_index([ODRecord("B", "A", 1)]) == {"A": 0, "B": 1}
    assert build_tract_index([ODRecord("A", "A", 1)]) == {"A": 0}


def test_index_stable_under_row_order():
    rows = [f"{o}0000,{d}0000,{f}" for o, d, f in [
        ("11111111111", "22222222222", 1), ("33333333333", "11111111111", 2), ("22222222222", "33333333333", 4)]]
    a = parse_od_csv(io.StringIO(HEADER + "\n".join(rows) + "\n"))
    random.Random(0).shuffle(rows)
    b = parse_od_csv(io.StringIO(HEADER + "\n".join(rows) + "\n"))
    assert build_tract_index(a) == build_tract_index(b)


def test_serialization_round_trip(tmp_path):
    recs = [ODRecord("36061000100", "36061000200", 0.1), ODRecord("36061000200", "36061000100", 1 / 3),
            ODRecord("36061000300", "36061000300", 2.0)]
    write_od_csv(recs, tmp_path / "g.csv")
    back = parse_od_csv(tmp_path / "g.csv")
    assert back == sorted(recs)
    g1, g2 = build_graph(recs), build_graph(back)
    assert g1.node_ids == g2.node_ids
    assert (g1.weights != g2.weights).nnz == 0
    assert g1.total_directed_flow == g2.total_directed_flow


def test_config_overrides_and_paths(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"city_name": "x", "d": 8, "od_path": "od.csv"}))
    cfg = CityConfig.load(tmp_path / "c.json", k=4, seed=None)
    assert (cfg.embed_dim, cfg.k, cfg.seed) == (8, 4, 0)
    assert cfg.od_path == str(tmp_path / "od.csv")


@pytest.mark.parametrize("bad", [{"k": 1}, {"method": "sbm"}, {"learning_rate": 0}, {"colour": 1}])
def test_config_validation(bad):
    with pytest.raises(CommuneError):
        CityConfig.from_dict(bad)
