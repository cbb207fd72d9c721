import json
import subprocess
import sys

import pytest

from tracebias.cli import main

SMALL = {
    "seed": 7, "n_participants": 6, "sessions_per_participant": 6.0, "segments_per_session": 6.0,
    "p_political_given_news": 0.4, "p_political_given_other": 0.1, "label_fraction": 0.5,
    "forest": {"n_trees": 5, "seed": 7},
}


@pytest.fixture
def corpus(tmp_path):
    cfg = tmp_path / "synth.json"
    cfg.write_text(json.dumps(SMALL))
    out = tmp_path / "run"
    assert main(["synth", "--config", str(cfg), "--output", str(out)]) == 0
    return out


def run_all(run_dir, *extra):
    conf = str(run_dir / "run.json")
    for cmd in (["train"], ["classify"], ["segment"], ["analyze"]):
        assert main(cmd + ["--config", conf, *extra]) == 0, cmd


def test_synth_outputs(corpus):
    names = {p.name for p in corpus.iterdir()}
    assert {"trace.jsonl", "truth.jsonl", "ground_truth.jsonl", "segments.csv", "catalog.csv", "run.json",
            "synth_config.json", "manifest.synth.json"} <= names
    manifest = json.loads((corpus / "manifest.synth.json").read_text())
    assert manifest["seed"] == 7 and "trace.jsonl" in manifest["outputs"]
    assert not any(p.name.endswith(".tmp") for p in corpus.iterdir())


def test_synth_then_validate(corpus, capsys):
    assert main(["validate", str(corpus / "trace.jsonl")]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["records_rejected"] == 0 and report["records_accepted"] > 0


def test_validate_reports_bad_lines(tmp_path, capsys):
    path = tmp_path / "t.jsonl"
    path.write_text('{"participant_id": "p", "ts_ms": 1}\nnot json\n')
    assert main(["validate", str(path)]) == 1
    assert json.loads(capsys.readouterr().out)["records_rejected"] == 1


def test_full_pipeline(corpus):
    run_all(corpus)
    for name in ("model.bin", "cv_report.json", "labels.jsonl", "segments_classified.csv", "report.json",
                 "crosstab.csv", "histogram.csv", "strata.csv", "manifest.train.json",
                 "manifest.analyze.json"):
        assert (corpus / name).is_file(), name
    report = json.loads((corpus / "report.json").read_text())
    assert {"entangle", "flatten", "bundle"} <= set(report)
    truth = [json.loads(l)["political"] for l in (corpus / "truth.jsonl").read_text().splitlines()]
    pred = [json.loads(l)["political"] for l in (corpus / "labels.jsonl").read_text().splitlines()]
    assert sum(a == b for a, b in zip(truth, pred)) / len(truth) > 0.9
    manifest = json.loads((corpus / "manifest.analyze.json").read_text())
    assert manifest["inputs"]["trace"]["sha256"]


def test_truth_labels_reproduce_truth_segments(corpus, tmp_path):
    out = tmp_path / "seg"
    assert main(["segment", "--config", str(corpus / "run.json"), "--labels", str(corpus / "truth.jsonl"),
                 "--output", str(out)]) == 0
    assert (out / "segments_classified.csv").read_text() == (corpus / "segments.csv").read_text()


def test_rerun_is_byte_identical(corpus, tmp_path):
    run_all(corpus)
    first = {p.name: p.read_bytes() for p in corpus.iterdir()}
    run_all(corpus, "--threads", "3")
    for p in corpus.iterdir():
        assert p.read_bytes() == first[p.name], p.name


def test_segment_by_app_and_category(corpus):
    conf = str(corpus / "run.json")
    assert main(["segment", "--config", conf, "--label-by", "app"]) == 0
    assert main(["segment", "--config", conf, "--label-by", "category"]) == 0
    assert (corpus / "segments_app.csv").is_file() and (corpus / "segments_category.csv").is_file()


def test_single_class_training_exits_2(corpus, caplog):
    gt = corpus / "ground_truth.jsonl"
    lines = [json.loads(l) for l in gt.read_text().splitlines()]
    gt.write_text("".join(json.dumps({**d, "political": False}) + "\n" for d in lines))
    assert main(["train", "--config", str(corpus / "run.json")]) == 2
    assert "single class" in caplog.text


def test_unknown_config_key_exits_2(corpus):
    conf = json.loads((corpus / "run.json").read_text())
    conf["forest"]["n_tree"] = 3
    bad = corpus / "bad.json"
    bad.write_text(json.dumps(conf))
    assert main(["train", "--config", str(bad)]) == 2
    conf = json.loads((corpus / "run.json").read_text())
    conf["typo"] = 1
    bad.write_text(json.dumps(conf))
    assert main(["train", "--config", str(bad)]) == 2


def test_missing_inputs_exit_2(tmp_path, corpus):
    assert main(["train", "--config", str(tmp_path / "nope.json")]) == 2
    assert main(["classify", "--config", str(corpus / "run.json"), "--model", str(tmp_path / "x.bin")]) == 2
    assert main(["synth", "--config", str(tmp_path / "nope.json")]) == 2


def test_usage_errors_exit_1(corpus):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["train", "--config", str(corpus / "run.json"), "--threads", "0"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["train"])
    assert exc.value.code == 1


def test_runtime_failure_exits_3(corpus, monkeypatch):
    import tracebias.cli as cli

    def boom(*a, **k):
        raise RuntimeError("disk on fire")
    monkeypatch.setattr(cli, "train_stage", boom)
    assert main(["train", "--config", str(corpus / "run.json")]) == 3


def test_seed_and_output_overrides(corpus, tmp_path):
    conf = str(corpus / "run.json")
    out = tmp_path / "alt"
    assert main(["train", "--config", conf, "--seed", "123", "--output", str(out)]) == 0
    manifest = json.loads((out / "manifest.train.json").read_text())
    assert manifest["seed"] == 123
    assert not (corpus / "model.bin").exists()


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "tracebias.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("tracebias ")
