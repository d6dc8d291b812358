import csv
import json
import re

import pytest

from reltree.cli import run
from reltree.ldt import build_root_ldt
from reltree.params import LearnParams
from reltree.schema import load_schema
from reltree.storage import load_database


@pytest.fixture
def school_paths(tmp_path):
    out = tmp_path / "data"
    code = run(["synth", "--preset", "school", "--seed", "3", "--out", str(out)])
    assert code == 0
    return out


def test_synth_learn_predict_pipeline(school_paths, tmp_path, capsys):
    model_path = tmp_path / "model.json"
    code = run(
        ["learn", "--schema", str(school_paths / "schema.yaml"), "--data", str(school_paths),
         "--mode", "lazy-restricted", "--out", str(model_path)]
    )
    assert code == 0
    assert model_path.exists()

    preds_path = tmp_path / "preds.csv"
    code = run(
        ["predict", "--model", str(model_path), "--schema", str(school_paths / "schema.yaml"),
         "--data", str(school_paths), "--out", str(preds_path)]
    )
    assert code == 0
    out = capsys.readouterr().out
    m = re.search(r"accuracy on (\d+) labeled: ([\d.]+)", out)
    assert m, out
    assert float(m.group(2)) == 1.0  # resubstitution on noise-free planted data

    with open(preds_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["instance_id", "predicted_class", "confidence"]
    assert len(rows) == 101
    assert rows[1][1] in ("yes", "no")
    assert 0.0 <= float(rows[1][2]) <= 1.0


def test_predict_with_ids_file(school_paths, tmp_path):
    model_path = tmp_path / "model.json"
    run(["learn", "--schema", str(school_paths / "schema.yaml"), "--data", str(school_paths),
         "--out", str(model_path)])
    ids = tmp_path / "ids.txt"
    ids.write_text("p3\np7\n", encoding="utf-8")
    preds = tmp_path / "preds.csv"
    code = run(["predict", "--model", str(model_path), "--schema", str(school_paths / "schema.yaml"),
                "--data", str(school_paths), "--ids", str(ids), "--out", str(preds)])
    assert code == 0
    with open(preds, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert [r[0] for r in rows[1:]] == ["p3", "p7"]


def test_cv_writes_report(school_paths, tmp_path, capsys):
    report_path = tmp_path / "report.json"
    code = run(["cv", "--schema", str(school_paths / "schema.yaml"), "--data", str(school_paths),
                "--mode", "lazy-restricted", "--k", "10", "--seed", "5", "--out", str(report_path)])
    assert code == 0
    doc = json.loads(report_path.read_text())
    assert len(doc["fold_accuracies"]) == 10
    assert doc["mean_accuracy"] >= doc["majority_accuracy"]
    assert "cv mode=lazy-restricted" in capsys.readouterr().out


def test_propositionalize_manifest_matches_root_ldt(school_paths, tmp_path):
    flat_path = tmp_path / "flat.csv"
    manifest_path = tmp_path / "manifest.txt"
    code = run(["propositionalize", "--schema", str(school_paths / "schema.yaml"),
                "--data", str(school_paths), "--max-path-len", "1",
                "--out", str(flat_path), "--manifest", str(manifest_path)])
    assert code == 0
    manifest_names = [line.split("\t")[0] for line in manifest_path.read_text().splitlines()]

    catalog = load_schema(school_paths / "schema.yaml")
    db = load_database(catalog, school_paths)
    root = build_root_ldt(db, LearnParams())
    assert set(manifest_names) == {c.descriptor.name for c in root.columns}

    with open(flat_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 101


def test_help_lists_documented_defaults(capsys):
    defaults = LearnParams()
    assert run(["learn", "--help"]) == 0
    text = capsys.readouterr().out
    assert f"default: {defaults.min_ig}" in text
    assert f"default: {defaults.min_inst}" in text
    assert "default: inf" in text
    assert f"default: {defaults.domsize_abs}" in text
    assert f"default: {defaults.domsize_rel}" in text


def test_cv_strip_defaults_on_learn_off(capsys):
    assert run(["cv", "--help"]) == 0
    assert "default: True" in capsys.readouterr().out
    assert run(["learn", "--help"]) == 0
    assert "default: False" in capsys.readouterr().out


def test_unknown_flag_is_usage_error(school_paths):
    code = run(["learn", "--schema", "s", "--data", "d", "--out", "m", "--frobnicate"])
    assert code == 2


def test_missing_subcommand_is_usage_error():
    assert run([]) == 2


def test_validation_error_exits_one(tmp_path, capsys):
    bad = tmp_path / "schema.yaml"
    bad.write_text("target: Nowhere.y\ntables:\n  - name: A\n    columns:\n      - id: pk\n", encoding="utf-8")
    code = run(["learn", "--schema", str(bad), "--data", str(tmp_path), "--out", str(tmp_path / "m.json")])
    assert code == 1
    err = capsys.readouterr().err
    assert err.startswith("error:") and len(err.strip().splitlines()) == 1


def test_synth_with_spec_override(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"n_professors": 25, "rule": "movie_genre"}), encoding="utf-8")
    out = tmp_path / "out"
    assert run(["synth", "--seed", "1", "--spec", str(spec), "--out", str(out)]) == 0
    truth = json.loads((out / "truth.json").read_text())
    assert truth["rule"] == "movie_genre"
    assert truth["spec"]["n_professors"] == 25


def test_cv_eager_mode(school_paths, tmp_path):
    report_path = tmp_path / "report.json"
    code = run(["cv", "--schema", str(school_paths / "schema.yaml"), "--data", str(school_paths),
                "--mode", "eager", "--k", "5", "--seed", "2", "--max-path-len", "3",
                "--out", str(report_path)])
    assert code == 0
    doc = json.loads(report_path.read_text())
    assert doc["mode"] == "eager"
    assert len(doc["fold_accuracies"]) == 5
