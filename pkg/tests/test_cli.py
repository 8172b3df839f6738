"""Command-line driver: a small end-to-end run, reproducibility and exit codes."""

import csv
import json

import pytest

from vocalscreen.cli import main

SMALL_MODEL = ["--mode", "pure-1d-f", "--layers", "2", "--dilation-list", "1,2", "--widths", "4,4",
               "--epochs", "2", "--patience", "2"]


def run(*argv):
    return main([str(a) for a in argv])


def pipeline(root):
    """Every command once, on a tiny synthetic corpus."""
    data, work = root / "data", root / "work"
    assert run("synth", "--out", data, "--seed", 5, "--subjects", 8, "--recordings", 1, "--duration", 7) == 0
    manifest = data / "manifest.json"
    assert run("preprocess", "--out", work, "--manifest", manifest) == 0
    assert run("extract", "--out", work, "--feature", "fusion,mfcc") == 0
    assert run("split", "--out", work, "--manifest", manifest, "--seed", 1, "--test-fraction", 0.25,
               "--val-fraction", 0.34) == 0
    cache, split = work / "fusion.ftds", work / "split.json"
    assert run("train", "--out", work / "model", "--cache", cache, "--split", split, "--seed", 0, *SMALL_MODEL) == 0
    assert run("evaluate", "--out", work / "eval", "--model", work / "model", "--cache", cache,
               "--split", split) == 0
    assert run("annotate", "--out", work / "eval", "--model", work / "model", "--cache", cache) == 0
    assert run("grid-search", "--out", work / "grid", "--cache", cache, "--split", split, "--seed", 0,
               "--kernels", "3", "--dilations", "1,1;1,2", "--widths", "4,4", "--epochs", "1") == 0
    assert run("importance", "--out", work / "imp", "--cache", work / "mfcc.ftds", "--seed", 0,
               "--folds", 4, "--trees", 10, "--save-forest") == 0
    assert run("ablate-mask", "--out", work / "abl", "--cache", cache, "--split", split, "--seed", 0,
               "--repeats", 1, *SMALL_MODEL[:-4], "--epochs", "1") == 0
    assert run("export-vectors", "--out", work / "vec", "--cache", cache, "--axis", "T") == 0
    return work


def artifacts(work):
    """Relative path -> bytes for every file except the echoed configs (which record paths)."""
    return {p.relative_to(work).as_posix(): p.read_bytes()
            for p in sorted(work.rglob("*")) if p.is_file() and not p.name.startswith("config.")}


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    return pipeline(tmp_path_factory.mktemp("a")), pipeline(tmp_path_factory.mktemp("b"))


def test_outputs_present(runs):
    work = runs[0]
    expected = ["segments.json", "segments.f32", "fusion.ftds", "mfcc.ftds", "split.json",
                "model/model.json", "model/model.bin", "model/stats.json", "model/fit_report.json",
                "eval/evaluation.json", "eval/predictions.csv", "grid/grid.csv", "imp/importance.csv",
                "imp/importance.json", "imp/forest.json", "abl/ablation.csv", "abl/ablation_runs.csv",
                "vec/vectors_T.csv"]
    for rel in expected:
        assert (work / rel).exists(), rel
    assert list((work / "eval" / "annotations").glob("*.svg"))
    cfg = json.loads((work / "model" / "config.train.json").read_text())
    assert cfg["config"]["model"]["widths"] == [4, 4] and cfg["config"]["seed"] == 0


def test_table_shaped_ablation(runs):
    rows = list(csv.DictReader((runs[0] / "abl" / "ablation.csv").open()))
    assert len(rows) == 1 and rows[0]["feature"] == "fusion"
    assert {"Original Acc", "T Mask F1", "F Mask Acc", "T-F Mask F1"} <= set(rows[0])


def test_grid_rows(runs):
    rows = list(csv.DictReader((runs[0] / "grid" / "grid.csv").open()))
    assert [r["dilations"] for r in rows] == ["1,1", "1,2"]


def test_rerun_is_byte_identical(runs):
    a, b = artifacts(runs[0]), artifacts(runs[1])
    assert a.keys() == b.keys()
    differing = [k for k in a if a[k] != b[k]]
    assert not differing


def test_config_file_and_override(runs, tmp_path):
    (tmp_path / "cfg.json").write_text(json.dumps({"train": {"lr": 0.5}, "forest": {"n_trees": 7}}))
    manifest = runs[0].parent / "data" / "manifest.json"
    assert run("split", "--out", tmp_path / "d", "--seed", 0, "--manifest", manifest,
               "--config", tmp_path / "cfg.json") == 0
    echoed = json.loads((tmp_path / "d" / "config.split.json").read_text())
    assert echoed["config"]["train"]["lr"] == 0.5 and echoed["config"]["forest"]["n_trees"] == 7


def _stderr_record(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_missing_input_exit_2(tmp_path, capsys):
    assert run("preprocess", "--out", tmp_path, "--manifest", tmp_path / "none.json") == 2
    rec = _stderr_record(capsys)
    assert rec["status"] == "error" and rec["exit_code"] == 2


def test_bad_config_exit_2(tmp_path, capsys):
    (tmp_path / "cfg.json").write_text(json.dumps({"optimizer": {}}))
    assert run("synth", "--out", tmp_path, "--seed", 0, "--config", tmp_path / "cfg.json") == 2


def test_missing_seed_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("split", "--out", tmp_path, "--manifest", "m.json")
    assert exc.value.code == 2


@pytest.mark.filterwarnings("ignore:overflow encountered")
def test_diverged_training_exit_3(runs, tmp_path, capsys):
    work = runs[0]
    code = run("train", "--out", tmp_path, "--cache", work / "fusion.ftds", "--split", work / "split.json",
               "--seed", 0, *SMALL_MODEL, "--lr", "1e30")
    assert code == 3
    assert _stderr_record(capsys)["error"] == "DivergedLoss"
