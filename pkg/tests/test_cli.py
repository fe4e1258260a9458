import json
import os

import numpy as np
import pytest

from densityrank.harness.cli import main
from densityrank.scores import DensityScore, ScoreTable

TINY = """
[dataset]
seed = 1
n = 24
side = 4
levels = 2
eval_seed = 2
eval_n = 12

[model]
family = flow
layers = 2
hidden = 8

[train]
epochs = 2
batch_size = 8

[experiment]
bins = 3
per_bin = 2
"""


@pytest.fixture()
def cfg_file(tmp_path):
    path = tmp_path / "cfg.ini"
    path.write_text(TINY)
    return str(path)


@pytest.fixture()
def base_run(cfg_file, tmp_path):
    out = str(tmp_path / "base")
    assert main(["train", "--config", cfg_file, "--out", out]) == 0
    return out


class TestTrain:
    def test_creates_run_directory(self, base_run):
        assert os.path.isfile(os.path.join(base_run, "manifest.json"))
        assert os.path.isfile(os.path.join(base_run, "model.ck"))

    def test_locked_directory_fails_cleanly(self, cfg_file, base_run, capsys):
        # .lock was released, so recreate it to simulate a concurrent run
        open(os.path.join(base_run, ".lock"), "w").close()
        rc = main(["train", "--config", cfg_file, "--out", base_run])
        assert rc == 1
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "HarnessError"
        assert "locked" in err["message"]


class TestScoreRankStrip:
    def test_pipeline(self, cfg_file, base_run, tmp_path):
        csv = str(tmp_path / "eval.csv")
        model = os.path.join(base_run, "model.ck")
        assert main(["score", "--config", cfg_file, "--out", csv,
                     "--model", model, "--split", "eval"]) == 0
        table = ScoreTable.load_csv(csv)
        assert len(table) == 12

        rank = str(tmp_path / "rank.json")
        assert main(["rank", "--scores", csv, "--out", rank]) == 0
        obj = json.loads(open(rank).read())
        assert len(obj["ids"]) == 12

        strip = str(tmp_path / "strip.ppm")
        assert main(["strip", "--config", cfg_file, "--out", strip,
                     "--ranking", rank]) == 0
        assert os.path.getsize(strip) > 0

    def test_missing_scores_file(self, tmp_path, capsys):
        rc = main(["rank", "--scores", str(tmp_path / "nope.csv"),
                   "--out", str(tmp_path / "r.json")])
        assert rc == 1
        err = json.loads(capsys.readouterr().err)
        assert "error" in err and "message" in err


class TestLdt:
    def test_end_to_end(self, cfg_file, base_run, tmp_path):
        ldt_cfg = tmp_path / "ldt.ini"
        ldt_cfg.write_text(TINY.replace("[experiment]",
                                        "[experiment]\nregime = ldt10"))
        out = str(tmp_path / "ldt")
        rc = main([
            "ldt", "--config", str(ldt_cfg), "--out", out,
            "--base", base_run,
            "--base-ranking", os.path.join(base_run, "ranking_epoch2.json"),
        ])
        assert rc == 0
        report = json.loads(open(os.path.join(out, "ldt_report.json")).read())
        assert report["regime"] == "ldt10"
        assert report["subset_size"] == 3  # ceil(0.10 * 24)
        assert all(-1.0 <= c["spearman_vs_base"] <= 1.0
                   for c in report["checkpoints"])


class TestDominance:
    def test_with_saved_model(self, cfg_file, base_run, tmp_path, capsys):
        out = str(tmp_path / "dom")
        rc = main(["dominance", "--config", cfg_file, "--out", out,
                   "--model", os.path.join(base_run, "model.ck")])
        assert rc == 0
        report = json.loads(capsys.readouterr().out)
        assert {"spearman_total_jacobian", "spearman_total_latent",
                "spearman_latent_jacobian"} <= set(report)

    def test_rejects_non_flow(self, tmp_path, capsys):
        cfg = tmp_path / "ar.ini"
        cfg.write_text(TINY.replace("family = flow", "family = ar"))
        rc = main(["dominance", "--config", str(cfg),
                   "--out", str(tmp_path / "d")])
        assert rc == 1
        assert "flow" in json.loads(capsys.readouterr().err)["message"]


class TestPerturb:
    def test_with_saved_model(self, base_run, tmp_path, capsys):
        cfg = tmp_path / "p.ini"
        cfg.write_text(TINY.replace(
            "[experiment]",
            "[experiment]\nperturb_train_tier = 2\nperturb_simple_tier = 1",
        ))
        out = str(tmp_path / "pert")
        rc = main(["perturb", "--config", str(cfg), "--out", out,
                   "--model", os.path.join(base_run, "model.ck")])
        assert rc == 0
        report = json.loads(capsys.readouterr().out)
        assert report["noise_variance"] == 0.0064
        assert os.path.isfile(os.path.join(out, "perturbation.json"))


class TestMatrix:
    def test_proxies_plus_external_scores(self, cfg_file, base_run, tmp_path):
        csv = str(tmp_path / "flow.csv")
        assert main(["score", "--config", cfg_file, "--out", csv,
                     "--model", os.path.join(base_run, "model.ck")]) == 0
        prefix = str(tmp_path / "matrix")
        rc = main(["matrix", "--config", cfg_file, "--out", prefix,
                   "--scores", f"flow={csv}"])
        assert rc == 0
        obj = json.loads(open(prefix + "_spearman.json").read())
        assert "flow+jpeg_complexity" in obj["labels"]
        assert os.path.isfile(prefix + "_kendall.svg")

    def test_bad_scores_spec(self, cfg_file, tmp_path, capsys):
        rc = main(["matrix", "--config", cfg_file,
                   "--out", str(tmp_path / "m"), "--scores", "nopath"])
        assert rc == 1
        assert "label=path" in json.loads(capsys.readouterr().err)["message"]


class TestReport:
    def test_markdown_summary(self, base_run, tmp_path):
        out = str(tmp_path / "report.md")
        assert main(["report", "--run", base_run, "--out", out]) == 0
        text = open(out).read()
        assert text.startswith("# Run report")
        assert "model.ck" in text

    def test_missing_manifest(self, tmp_path, capsys):
        rc = main(["report", "--run", str(tmp_path), "--out",
                   str(tmp_path / "r.md")])
        assert rc == 1
        assert "manifest" in json.loads(capsys.readouterr().err)["message"]


class TestSeedOverride:
    def test_seed_flag_changes_experiment_seed(self, cfg_file, tmp_path):
        a = str(tmp_path / "a")
        b = str(tmp_path / "b")
        assert main(["train", "--config", cfg_file, "--out", a, "--seed", "1"]) == 0
        assert main(["train", "--config", cfg_file, "--out", b, "--seed", "2"]) == 0
        # experiment seed drives the rank-strip stratified draw
        strip_a = open(os.path.join(a, "rank_strip.ppm"), "rb").read()
        strip_b = open(os.path.join(b, "rank_strip.ppm"), "rb").read()
        assert strip_a != strip_b
        # model training is governed by the train section, so weights agree
        ma = open(os.path.join(a, "model.ck"), "rb").read()
        mb = open(os.path.join(b, "model.ck"), "rb").read()
        assert ma == mb
