import csv
import json

import pytest

from kbstab import ingest
from kbstab.cli import run

from conftest import DATA, cli_pipeline

CRIT = DATA / "criteria"
FILT = DATA / "filter"


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestHappyPaths:
    def test_criteria_fixture_with_manifest(self, tmp_path):
        report = tmp_path / "changes.jsonl"
        assert run(["analyze", "--t1", str(CRIT / "snapshot_t1.tsv"), "--t2", str(CRIT / "snapshot_t2.tsv"),
                    "--tau1", "2017", "--tau2", "2020", "--out", str(report)]) == 0
        out = tmp_path / "criteria.csv"
        assert run(["eval-criteria", "--report", str(report), "--gold", str(CRIT / "labels.tsv"),
                    "--out", str(out)]) == 0
        got = {r["criterion"]: tuple(int(r[k]) for k in ("tp", "fp", "fn", "tn")) for r in rows(out)}
        assert got == {"timestamp": (8, 1, 2, 10), "pca": (7, 3, 3, 8), "bulk": (8, 2, 2, 9)}
        manifest = json.loads((tmp_path / "criteria.csv.manifest.json").read_text())
        assert manifest["command"] == "eval-criteria" and manifest["seed"] == 0
        assert {i["path"] for i in manifest["inputs"]} == {str(report), str(CRIT / "labels.tsv")}
        assert all(len(i["sha256"]) == 64 for i in manifest["inputs"] + manifest["outputs"])

    def test_filter_properties_fixture(self, tmp_path):
        out = tmp_path / "props.csv"
        assert run(["filter-properties", "--class", str(FILT / "class.txt"), "--measure", "objects",
                    "--snapshot", str(FILT / "snapshot.tsv"), "--gold", str(FILT / "property_labels.tsv"),
                    "--out", str(out)]) == 0
        (m,) = rows(f"{out}.metrics.csv")
        assert (int(m["tp"]), int(m["fp"]), int(m["fn"]), int(m["tn"])) == (5, 1, 0, 9)
        assert float(m["f1"]) == pytest.approx(10 / 11)

    def test_convert_wikidata(self, tmp_path):
        out = tmp_path / "snap.tsv"
        assert run(["convert-wikidata", "--dump", str(DATA / "wikidata" / "dump.jsonl"),
                    "--properties", "P54,P27,P569", "--sampled-at", "2020", "--out", str(out)]) == 0
        assert len(ingest.load_snapshot(out)) == 12

    def test_filter_entities(self, tmp_path):
        snap = tmp_path / "s.tsv"
        snap.write_text("#sampled_at=2020\nA\tP570\tliteral\t1990\t\t2000\nB\tP27\tentity\tQ1\t\t2000\n")
        out = tmp_path / "e.csv"
        assert run(["filter-entities", "--snapshot", str(snap), "--out", str(out)]) == 0
        assert [(r["entity"], r["stable"]) for r in rows(out)] == [("A", "1"), ("B", "0")]

    def test_kde_and_predict(self, tmp_path):
        outputs = cli_pipeline(tmp_path)
        kde_rows = rows(outputs["kde.csv"])
        hist = [r for r in kde_rows if r["series"] == "histogram"]
        assert len(hist) == 21 and sum(int(r["y"]) for r in hist) > 0
        assert sum(r["series"] == "density" for r in kde_rows) == 1024
        pred = tmp_path / "pred.csv"
        assert run(["predict", "--model", str(tmp_path / "model.tsv"), "--features", str(tmp_path / "text.tsv"),
                    "--out", str(pred)]) == 0
        got = rows(pred)
        assert got and all((float(r["probability"]) >= 0.5) == (r["label"] == "1") for r in got)


class TestErrors:
    def test_missing_input_exits_2(self, tmp_path, capsys):
        code = run(["kde", "--snapshot", str(tmp_path / "nope.tsv"), "--property", "P54",
                    "--out", str(tmp_path / "k.csv")])
        assert code == 2
        assert "nope.tsv" in capsys.readouterr().err
        assert not (tmp_path / "k.csv").exists()

    def test_malformed_input_exits_2(self, tmp_path):
        bad = tmp_path / "bad.tsv"
        bad.write_text("#sampled_at=2020\nonly\ttwo\n")
        assert run(["kde", "--snapshot", str(bad), "--property", "P", "--out", str(tmp_path / "k.csv")]) == 2

    @pytest.mark.parametrize("argv", [[], ["frobnicate"], ["kde", "--property", "P54"],
                                      ["analyze", "--t1", "a", "--t2", "b", "--tau1", "notadate", "--out", "x"]])
    def test_usage_exits_1(self, argv, capsys):
        assert run(argv) == 1
        assert "usage" in capsys.readouterr().err

    def test_invalid_config_exits_1(self, tmp_path):
        cfg = tmp_path / "gen.cfg"
        cfg.write_text("real_world=0.9\ncompletion=0.9\n")
        assert run(["gen", "--config", str(cfg), "--out-dir", str(tmp_path / "g")]) == 1

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run(["--version"])
        assert exc.value.code == 0 and "kbstab" in capsys.readouterr().out


@pytest.fixture(scope="module")
def outputs(tmp_path_factory):
    return cli_pipeline(tmp_path_factory.mktemp("pipe"))


class TestPipeline:
    @pytest.mark.parametrize("name", ["criteria.csv", "eval.csv", "changes.jsonl.distribution.csv"])
    def test_golden(self, outputs, name):
        assert outputs[name].read_bytes() == (DATA / "golden" / name).read_bytes()

    def test_planted_token_ranks_first(self, outputs):
        assert rows(outputs["weights.csv"])[0]["feature"] == "signed"

    def test_byte_identical_rerun(self, outputs, tmp_path):
        again = cli_pipeline(tmp_path)
        assert sorted(again) == sorted(outputs)
        for name, path in outputs.items():
            assert again[name].read_bytes() == path.read_bytes(), name
