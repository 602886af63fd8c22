import csv
import json

import pytest

from commune import artifacts
from commune.cli import main
from commune.communities import nmi
from commune.synth import PlantedSpec, generate_records


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def synth_dir(tmp_path, capsys):
    code, _, _ = run(capsys, "synth", "--seed", 1, "--income-centers", "30000,60000,120000",
                     "--out", tmp_path / "s")
    assert code == 0
    return tmp_path / "s"


def write_config(path, synth_dir, **extra):
    cfg = {"city_name": "synthetic", "od_path": str(synth_dir / "od.csv"),
           "income_path": str(synth_dir / "incomes.csv"), "epochs": 150}
    cfg.update(extra)
    path.write_text(json.dumps(cfg))
    return path


def test_chain_recovers_planted_blocks(tmp_path, capsys, synth_dir):
    assert run(capsys, "ingest", "--od", synth_dir / "od.csv", "--income", synth_dir / "incomes.csv",
               "--out", tmp_path / "g")[0] == 0
    assert run(capsys, "embed", "--graph", tmp_path / "g/graph.csv", "--method", "gnn", "--dim", 16,
               "--out", tmp_path / "e")[0] == 0
    assert (tmp_path / "e/checkpoint.npz").exists()
    assert run(capsys, "cluster", "--embeddings", tmp_path / "e/embeddings.csv", "--k", 3,
               "--out", tmp_path / "c")[0] == 0
    code, out, _ = run(capsys, "evaluate", "--graph", tmp_path / "g/graph.csv", "--assignments",
                       tmp_path / "c/assignments.csv", "--incomes", tmp_path / "g/incomes.csv",
                       "--truth", synth_dir / "labels.csv", "--out", tmp_path / "r")
    assert code == 0
    report = json.loads(out)
    assert report["nmi"] >= 0.95
    rows = list(csv.reader(open(tmp_path / "r/results.csv")))
    assert rows[0][0] == "city" and len(rows) == 2


@pytest.mark.parametrize("method", ["le", "rw", "svd", "vnn"])
def test_embed_methods(tmp_path, capsys, synth_dir, method):
    run(capsys, "ingest", "--od", synth_dir / "od.csv", "--out", tmp_path)
    code, _, err = run(capsys, "embed", "--graph", tmp_path / "graph.csv", "--method", method, "--dim", 4,
                       "--epochs", 5, "--out", tmp_path)
    assert code == 0, err
    assert artifacts.read_embeddings_csv(tmp_path / "embeddings.csv").values.shape == (120, 4)


def test_cluster_k_zero_is_usage_error(tmp_path, capsys):
    code, _, err = run(capsys, "cluster", "--embeddings", tmp_path / "x.csv", "--k", 0)
    assert code == 2
    assert json.loads(err.strip().splitlines()[-1])["error"] == "UsageError"


def test_unknown_subcommand(capsys):
    assert run(capsys, "frobnicate")[0] == 2


def test_bad_config_is_usage_error(tmp_path, capsys):
    (tmp_path / "c.json").write_text(json.dumps({"k": 1}))
    code, _, err = run(capsys, "--config", tmp_path / "c.json", "pipeline", "--out", tmp_path)
    assert code == 2 and "k must be" in err


def test_computation_error_exit_1(tmp_path, capsys):
    (tmp_path / "e.csv").write_text("geoid,dim_0\na,1.0\nb,2.0\n")
    code, _, err = run(capsys, "cluster", "--embeddings", tmp_path / "e.csv", "--k", 3, "--out", tmp_path)
    assert code == 1
    assert json.loads(err)["error"] == "CommuneError"


def test_parse_error_exit_1(tmp_path, capsys):
    (tmp_path / "od.csv").write_text("w_geocode,h_geocode,S000\n360610002001002,360610001001001,-4\n")
    code, _, err = run(capsys, "ingest", "--od", tmp_path / "od.csv", "--out", tmp_path)
    assert code == 1 and "line 2" in json.loads(err)["message"]


def test_optimize_subcommand(tmp_path, capsys, synth_dir):
    run(capsys, "ingest", "--od", synth_dir / "od.csv", "--out", tmp_path)
    assert run(capsys, "optimize", "--graph", tmp_path / "graph.csv", "--out", tmp_path)[0] == 0
    got = artifacts.read_assignments_csv(tmp_path / "assignments.csv")
    truth = artifacts.read_assignments_csv(synth_dir / "labels.csv")
    keys = sorted(truth)
    assert nmi([got[k] for k in keys], [truth[k] for k in keys]) >= 0.95


def test_pipeline_deterministic_and_resume(tmp_path, capsys, synth_dir):
    cfg = write_config(tmp_path / "city.json", synth_dir, compare_optimizer=True)
    for out in ("a", "b"):
        assert run(capsys, "--config", cfg, "pipeline", "--out", tmp_path / out)[0] == 0
    for name in ("assignments.csv", "report.json", "results.csv", "embeddings.csv", "graph.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = list(csv.reader(open(tmp_path / "a/results.csv")))
    assert [r[1] for r in rows[1:]] == ["gnn", "optimizer"]
    manifest = json.loads((tmp_path / "a/manifest.json").read_text())
    assert manifest["input_hashes"]["od"] == artifacts.sha256_file(synth_dir / "od.csv")

    before = (tmp_path / "a/assignments.csv").stat().st_mtime_ns
    assert run(capsys, "--config", cfg, "pipeline", "--out", tmp_path / "a", "--resume")[0] == 0
    assert (tmp_path / "a/assignments.csv").stat().st_mtime_ns == before

    # a changed input is detected and the run is redone
    with open(synth_dir / "incomes.csv", "a") as fh:
        fh.write("99999999999,50000\n")
    assert run(capsys, "--config", cfg, "pipeline", "--out", tmp_path / "a", "--resume")[0] == 0
    assert (tmp_path / "a/assignments.csv").stat().st_mtime_ns != before


def test_pipeline_flag_overrides(tmp_path, capsys, synth_dir):
    cfg = write_config(tmp_path / "city.json", synth_dir)
    code, out, _ = run(capsys, "--config", cfg, "pipeline", "--k", 2, "--method", "le", "--dim", 3,
                       "--out", tmp_path / "o")
    assert code == 0
    assert json.loads(out)[0]["k"] == 2 and json.loads(out)[0]["method"] == "le"


def test_pipeline_multiple_cities(tmp_path, capsys, synth_dir, monkeypatch):
    monkeypatch.setenv("COMMUNE_THREADS", "2")
    write_config(tmp_path / "east.json", synth_dir, city_name="east", epochs=20)
    write_config(tmp_path / "west.json", synth_dir, city_name="west", epochs=20, seed=4)
    code, out, err = run(capsys, "pipeline", "--cities", "east,west", "--config-dir", tmp_path, "--out", tmp_path / "o")
    assert code == 0, err
    rows = list(csv.reader(open(tmp_path / "o/results.csv")))
    assert [r[0] for r in rows[1:]] == ["east", "west"]
    assert (tmp_path / "o/east/report.json").exists()


def test_geojson_join(tmp_path, capsys, synth_dir):
    recs, _, _ = generate_records(PlantedSpec(seed=1))
    ids = sorted({r.origin_geoid for r in recs})
    feats = [{"type": "Feature", "properties": {"GEOID": g}, "geometry": None} for g in ids[:5]]
    feats.append({"type": "Feature", "properties": {"GEOID": "00000000000"}, "geometry": None})
    (tmp_path / "t.geojson").write_text(json.dumps({"type": "FeatureCollection", "features": feats}))
    cfg = write_config(tmp_path / "c.json", synth_dir, geojson_path=str(tmp_path / "t.geojson"), epochs=10)
    assert run(capsys, "--config", cfg, "pipeline", "--out", tmp_path / "o")[0] == 0
    doc = json.loads((tmp_path / "o/communities.geojson").read_text())
    comms = [f["properties"]["community"] for f in doc["features"]]
    assert all(isinstance(c, int) for c in comms[:5]) and comms[5] is None


def test_synth_invalid_spec_is_usage_error(tmp_path, capsys):
    assert run(capsys, "synth", "--p-in", 2, "--out", tmp_path)[0] == 2
