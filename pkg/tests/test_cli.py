from __future__ import annotations

import json
import re

import pytest

from aadtsvr.cli import main
from aadtsvr.domain import ModelGroup
from aadtsvr.ingest import parse_hyperparams, parse_output
from aadtsvr.synth import SynthConfig, synth_generate

I, A, C = ModelGroup.INTERSTATE, ModelGroup.ARTERIAL, ModelGroup.COLLECTOR
PARAMS = "C,Gamma\n8,0.0625\n8,0.0625\n8,0.0625\n"


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    ds = synth_generate(SynthConfig(stations_per_group={I: 3, A: 3, C: 3}, coverage=0.1, n_short_term=9, seed=2))
    paths = ds.write(root)
    paths["params"] = root / "params.csv"
    paths["params"].write_text(PARAMS)
    return ds, paths


def training_args(paths):
    return ["--atr-dir", str(paths["atr_dir"]), "--atr-list", str(paths["atr_list"]), "--mapping", str(paths["mapping"])]


def estimate_args(paths, out, counts=None, factors=None):
    return [
        "estimate",
        "--counts", str(counts or paths["counts"]),
        "--factors", str(factors or paths["factors"]),
        "--params", str(paths["params"]),
        *training_args(paths),
        "--out", str(out),
        "--timestamp", "2018-07-18 14:45",
    ]


class TestTrain:
    def test_grid(self, dataset, tmp_path, capsys, monkeypatch):
        monkeypatch.delenv("AADT_SEED", raising=False)
        _, paths = dataset
        out = tmp_path / "params.csv"
        code = main(["train", *training_args(paths), "--grid", "--params-out", str(out),
                     "--c-range", "1", "3", "--gamma-range", "-5", "-3", "--step", "2", "--folds", "3"])
        assert code == 0
        table = parse_hyperparams(out.read_text())
        assert all(c in (2.0, 8.0) and g in (2**-5, 2**-3) for c, g in table.rows())
        err = capsys.readouterr().err
        pcts = [int(p) for p in re.findall(r"grid search: (\d+)%", err)]
        assert pcts == sorted(pcts) and pcts[-1] == 100
        manifest = json.loads((tmp_path / "params.csv.manifest.json").read_text())
        assert manifest["subcommand"] == "train" and manifest["seed"] == 0

    def test_seed_from_environment(self, dataset, tmp_path, monkeypatch):
        _, paths = dataset
        monkeypatch.setenv("AADT_SEED", "17")
        out = tmp_path / "p.csv"
        assert main(["train", *training_args(paths), "--grid", "--params-out", str(out),
                     "--c-range", "1", "1", "--gamma-range", "-3", "-3", "--folds", "3"]) == 0
        assert json.loads((tmp_path / "p.csv.manifest.json").read_text())["seed"] == 17

    def test_params_in(self, dataset, tmp_path, capsys):
        _, paths = dataset
        out = tmp_path / "copy.csv"
        assert main(["train", *training_args(paths), "--params-in", str(paths["params"]), "--params-out", str(out)]) == 0
        assert out.read_text() == PARAMS

    def test_flags_mutually_exclusive(self, dataset, capsys):
        _, paths = dataset
        with pytest.raises(SystemExit) as info:
            main(["train", *training_args(paths), "--grid", "--params-in", str(paths["params"])])
        assert info.value.code == 1
        assert "not allowed with" in capsys.readouterr().err

    def test_year_inferred_or_given(self, dataset, tmp_path):
        _, paths = dataset
        assert main(["train", *training_args(paths), "--params-in", str(paths["params"]), "--year", "2017"]) == 0
        assert main(["train", *training_args(paths), "--params-in", str(paths["params"]), "--year", "17"]) == 1


class TestEstimate:
    def test_pipeline(self, dataset, tmp_path, capsys):
        ds, paths = dataset
        assert main(estimate_args(paths, tmp_path)) == 0
        printed = capsys.readouterr().out.strip()
        assert printed.endswith("Output_07.18.2018_14.45.CSV")
        out = tmp_path / "Output_07.18.2018_14.45.CSV"
        recs = parse_output(out.read_text())
        assert [r.key for r in recs] == list(dict.fromkeys(r.key for r in ds.short_term))
        assert all(r.aadt_svr > 0 and r.aadt_factor > 0 for r in recs)
        manifest = json.loads((tmp_path / (out.name + ".manifest.json")).read_text())
        assert set(manifest["stages"]) >= {"parse_inputs", "load_atr", "fit_models", "estimate"}

    def test_header_only_for_empty_counts(self, dataset, tmp_path):
        _, paths = dataset
        empty = tmp_path / "empty.csv"
        empty.write_text(paths["counts"].read_text().splitlines()[0] + "\n")
        assert main(estimate_args(paths, tmp_path, counts=empty)) == 0
        lines = (tmp_path / "Output_07.18.2018_14.45.CSV").read_text().splitlines()
        assert lines == ["County,Station,Functional_Class,AADT-SVR,AADT-Factor"]

    def test_zero_factor(self, dataset, tmp_path, capsys):
        _, paths = dataset
        lines = paths["factors"].read_text().splitlines()
        for i in range(2, 14):
            cells = lines[i].split(",")
            cells[1] = ""
            lines[i] = ",".join(cells)
        broken = tmp_path / "factors.csv"
        broken.write_text("\n".join(lines) + "\n")
        assert main(estimate_args(paths, tmp_path / "out", factors=broken)) == 1
        assert "ZeroFactor" in capsys.readouterr().err

    def test_missing_file(self, dataset, tmp_path, capsys):
        _, paths = dataset
        assert main(estimate_args(paths, tmp_path, counts=tmp_path / "nope.csv")) == 1
        assert "nope.csv" in capsys.readouterr().err


class TestEvaluate:
    def test_report(self, dataset, tmp_path, capsys):
        _, paths = dataset
        main(estimate_args(paths, tmp_path))
        report = tmp_path / "report.csv"
        code = main(["evaluate", "--predictions", str(tmp_path / "Output_07.18.2018_14.45.CSV"),
                     "--truth", str(paths["truth"]), "--out", str(report), "--mapping", str(paths["mapping"])])
        assert code == 0
        lines = report.read_text().splitlines()
        assert lines[0] == "Group,N,MAPE-Factor,MAPE-SVR"
        assert [l.split(",")[0] for l in lines[1:]] == ["Interstate", "Arterial", "Collector", "All"]

    def test_perfect_predictions(self, tmp_path, capsys):
        preds = tmp_path / "Output_07.18.2018_14.45.CSV"
        preds.write_text("County,Station,Functional_Class,AADT-SVR,AADT-Factor\n1,80,12,7802,7802\n1,9,2,4051,4051\n")
        truth = tmp_path / "truth.csv"
        truth.write_text("County,Station,AADT\n1,80,7802\n1,9,4051\n")
        report = tmp_path / "r.csv"
        assert main(["evaluate", "--predictions", str(preds), "--truth", str(truth), "--out", str(report)]) == 0
        assert report.read_text().splitlines()[1:] == ["Interstate,1,0.00,0.00", "Arterial,1,0.00,0.00", "All,2,0.00,0.00"]

    def test_key_mismatch(self, dataset, tmp_path, capsys):
        _, paths = dataset
        main(estimate_args(paths, tmp_path))
        truth = tmp_path / "truth.csv"
        truth.write_text("County,Station,AADT\n1,1,1000\n")
        code = main(["evaluate", "--predictions", str(tmp_path / "Output_07.18.2018_14.45.CSV"),
                     "--truth", str(truth), "--out", str(tmp_path / "r.csv"), "--mapping", str(paths["mapping"])])
        assert code == 1
        assert "no ground truth" in capsys.readouterr().err


class TestFetchCommand:
    def write_inputs(self, tmp_path, template, ids):
        cfg = tmp_path / "fetch.cfg"
        cfg.write_text(f"url_template={template}\ntimeout_seconds=5\nmax_concurrent=3\n")
        lst = tmp_path / "atr_list.csv"
        lst.write_text("County,Station,FClass\n" + "".join(f"1,{s},12\n" for s in ids))
        return cfg, lst

    def test_partial(self, atr_server, tmp_path, capsys):
        atr_server.missing = {2}
        cfg, lst = self.write_inputs(tmp_path, atr_server.template, [1, 2, 3])
        out = tmp_path / "atr"
        assert main(["fetch", "--config", str(cfg), "--atr-list", str(lst), "--year", "2017", "--out", str(out)]) == 0
        assert sorted(p.name for p in out.glob("*.csv")) == ["1_1.csv", "1_3.csv"]
        assert "FAILED  1_2" in capsys.readouterr().out
        assert (out / "fetch_manifest.json").exists()

    def test_none(self, atr_server, tmp_path):
        atr_server.missing = {1, 2}
        cfg, lst = self.write_inputs(tmp_path, atr_server.template, [1, 2])
        assert main(["fetch", "--config", str(cfg), "--atr-list", str(lst), "--year", "2017", "--out", str(tmp_path / "o")]) == 2

    def test_unreachable_host(self, tmp_path):
        cfg, lst = self.write_inputs(tmp_path, "http://127.0.0.1:9/{station}/{year}", [1, 2])
        out = tmp_path / "o"
        assert main(["fetch", "--config", str(cfg), "--atr-list", str(lst), "--year", "2017", "--out", str(out)]) == 2
        assert list(out.glob("*.csv")) == []

    def test_bad_year(self, atr_server, tmp_path, capsys):
        cfg, lst = self.write_inputs(tmp_path, atr_server.template, [1])
        assert main(["fetch", "--config", str(cfg), "--atr-list", str(lst), "--year", "17", "--out", str(tmp_path / "o")]) == 1
        assert "YYYY" in capsys.readouterr().err

    def test_bad_template(self, tmp_path, capsys):
        cfg, lst = self.write_inputs(tmp_path, "http://h/{year}", [1])
        assert main(["fetch", "--config", str(cfg), "--atr-list", str(lst), "--year", "2017", "--out", str(tmp_path / "o")]) == 1
        assert "InvalidTemplate" in capsys.readouterr().err


def test_synth_command(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path), "--stations", "1", "--counts", "3", "--coverage", "0.2"]) == 0
    assert (tmp_path / "counts.csv").exists() and (tmp_path / "atr").is_dir()


def test_no_subcommand(capsys):
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == 1
