import csv
import json

import numpy as np
import pytest

from coenobia.cli import build_parser, main
from coenobia.classify import load_model
from coenobia.config import DEFAULTS
from coenobia.features import read_features

SUBCOMMANDS = ["synth", "segment", "features", "select", "train", "evaluate", "pipeline", "timing"]
SMALL = ["--no-grid", "--k", "3", "--sfs-folds", "3", "--sfs-max", "4"]


def run(argv):
    return main([str(a) for a in argv])


@pytest.mark.parametrize("command", SUBCOMMANDS)
def test_help_lists_flags_with_defaults(command, capsys):
    with pytest.raises(SystemExit) as exc:
        main([command, "--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    assert "--seed" in out and "--config" in out
    flag_lines = [ln for ln in out.splitlines() if ln.strip().startswith("--")]
    assert flag_lines
    # every option documents its default, possibly on a wrapped continuation line
    sub = next(a for a in build_parser()._subparsers._group_actions[0].choices.items()
               if a[0] == command)[1]
    for action in sub._actions:
        if action.option_strings and action.dest != "help":
            assert action.help and ("default" in action.help or "required" in action.help), \
                action.option_strings


def test_missing_manifest_exits_2(tmp_path, capsys):
    assert run(["segment", "--in", tmp_path / "nope.csv", "--out", tmp_path / "p"]) == 2
    err = capsys.readouterr().err
    assert err.startswith("coenobia: data error:") and err.count("\n") == 1


def test_bad_config_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("no.such.key = 3\n", encoding="utf-8")
    assert run(["synth", "--per-class", 1, "--out", tmp_path / "s", "--config", bad]) == 1
    assert "config error" in capsys.readouterr().err
    assert run(["synth", "--per-class", 1, "--out", tmp_path / "s", "--noise", -2]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["synth", "--bogus-flag"])
    assert exc.value.code == 1


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# settings\nseed = 5\nsynth.noise_sigma = 1.5\ncv.folds = 3\n", encoding="utf-8")
    out = tmp_path / "run"
    argv = ["pipeline", "--synth", 3, "--out", out, "--config", cfg, "--seed", 9, "--no-plots",
            "--no-grid", "--tau", 7]
    assert run(argv) == 0
    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert report["seed"] == 9
    assert report["config"]["synth.noise_sigma"] == 1.5
    assert report["config"]["cv.folds"] == 3
    assert report["config"]["ann.tau"] == 7
    assert set(report["config"]) == set(DEFAULTS)


def test_staged_commands(tmp_path):
    corpus, patches = tmp_path / "corpus", tmp_path / "patches"
    assert run(["synth", "--per-class", 4, "--seed", 2, "--out", corpus]) == 0
    assert (corpus / "manifest.csv").exists()
    assert run(["segment", "--in", corpus / "manifest.csv", "--out", patches]) == 0
    with open(patches / "patches.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    kept = [r for r in rows if not r["drop_reason"]]
    assert len(kept) == 16
    assert (patches / "hoover.csv").exists() and (patches / "segmentation.json").exists()

    feats = tmp_path / "features.csv"
    assert run(["features", "--patches", patches, "--out", feats]) == 0
    data = read_features(feats)
    assert data.X.shape == (16, 215)

    ranking = tmp_path / "ranking.json"
    assert run(["select", "--features", feats, "--out", ranking, "--sfs-folds", 3, "--sfs-max", 6]) == 0
    r = json.loads(ranking.read_text(encoding="utf-8"))
    assert len(r["order"]) == 6 and 1 <= r["l"] <= 6
    assert (tmp_path / "sfs_curve.png").exists()

    model = tmp_path / "model.bin"
    assert run(["train", "--features", feats, "--ranking", ranking, "--out", model,
                "--model", "svm", "--no-grid"]) == 0
    m = load_model(model)
    assert len(m.selected) == r["l"]
    assert np.array_equal(m.predict(data.X), m.predict(data.X))

    report = tmp_path / "report.json"
    assert run(["evaluate", "--features", feats, "--ranking", ranking, "--out", report,
                "--k", 3, "--no-grid"]) == 0
    rep = json.loads(report.read_text(encoding="utf-8"))
    assert 0.0 <= rep["mean_accuracy"] <= 1.0
    assert len(rep["classification"]["fold_accuracies"]) == 3
    assert (tmp_path / "confusion.png").exists()


def test_evaluate_model_config_precedence(tmp_path):
    corpus = tmp_path / "c"
    assert run(["synth", "--per-class", 3, "--out", corpus]) == 0
    assert run(["segment", "--in", corpus / "manifest.csv", "--out", tmp_path / "p"]) == 0
    feats = tmp_path / "f.csv"
    assert run(["features", "--patches", tmp_path / "p", "--out", feats]) == 0
    mc = tmp_path / "model.cfg"
    mc.write_text("classifier.kind = svm\nsvm.kernel = linear\nsvm.C = 10\ncv.grid = false\n",
                  encoding="utf-8")
    out = tmp_path / "r.json"
    assert run(["evaluate", "--features", feats, "--model-config", mc, "--C", 0.5,
                "--k", 3, "--out", out]) == 0
    rep = json.loads(out.read_text(encoding="utf-8"))
    assert rep["classifier"]["kernel"] == "linear"
    assert rep["classifier"]["C"] == 0.5
    assert rep["grid"] is None


def test_pipeline_outputs_and_determinism(tmp_path):
    reports = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert run(["pipeline", "--synth", 3, "--seed", 4, "--out", out, "--sfs", *SMALL]) == 0
        for f in ("report.json", "hoover.csv", "model.bin", "counts.csv", "features.csv",
                  "ranking.json", "hoover.png", "confusion.png", "sfs_curve.png"):
            assert (out / f).exists(), f
        reports.append(json.loads((out / "report.json").read_text(encoding="utf-8")))
    for r in reports:
        assert "mean_accuracy" in r and "std_accuracy" in r
        r.pop("timestamp")
    assert reports[0] == reports[1]
    assert (tmp_path / "a" / "model.bin").read_bytes() == (tmp_path / "b" / "model.bin").read_bytes()
    with open(tmp_path / "a" / "counts.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 12
    assert all(int(r["total"]) == 1 for r in rows)


def test_timing_needs_thirty_patches(tmp_path, capsys):
    assert run(["timing", "--synth", 2, "--work", tmp_path / "few"]) == 2
    assert "30" in capsys.readouterr().err
    out = tmp_path / "timing.json"
    assert run(["timing", "--synth", 8, "--work", tmp_path / "ok", "--out", out]) == 0
    t = json.loads(out.read_text(encoding="utf-8"))
    assert t["patches"] >= 30
    assert t["mean_seconds"] > 0 and t["std_seconds"] >= 0
