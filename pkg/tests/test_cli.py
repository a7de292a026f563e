from __future__ import annotations

import json

import pytest

from bpreview.cli import main
from bpreview.corpus import comment_to_record, snapshot_to_record, write_jsonl
from bpreview.corpus import FileSnapshot, ReviewComment
from bpreview.synthetic import corpus_records, review_corpus
from conftest import FUNC_URL, GO_EXAMPLE, count_offset_of_func


@pytest.fixture
def go_path(tmp_path):
    p = tmp_path / "add.go"
    p.write_bytes(GO_EXAMPLE)
    return p


def _write(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        write_jsonl(records, fh)
    return path


def test_analyze_go_example(go_path, tmp_path, capsys):
    th = tmp_path / "t.cfg"
    th.write_text("default 0.98\n")
    assert main(["analyze", "--file", str(go_path), "--thresholds", str(th)]) == 0
    out = capsys.readouterr().out.strip().splitlines()
    assert len(out) == 1 and out[0].startswith(f"{go_path}:5: {FUNC_URL}")


def test_analyze_json_and_rules(go_path, tmp_path, capsys):
    rules = _write(tmp_path / "rules.jsonl", [{"url_pattern": FUNC_URL, "reason": "x", "active": True}])
    assert main(["analyze", "--file", str(go_path), "--rules", str(rules), "--json"]) == 0
    assert capsys.readouterr().out == ""


def test_unknown_subcommand_and_flag(capsys):
    assert main(["frobnicate"]) != 0
    assert main(["analyze", "--bogus"]) != 0
    assert "usage" in capsys.readouterr().err


def test_calibrate_empty_input(tmp_path, capsys):
    empty = tmp_path / "cases.jsonl"
    empty.write_text("")
    assert main(["calibrate", "--cases", str(empty)]) != 0
    assert "no evaluation cases" in capsys.readouterr().err


def test_curate_split_calibrate_pipeline(tmp_path, capsys):
    off = count_offset_of_func(GO_EXAMPLE)
    records = []
    for i in range(12):
        snap = FileSnapshot(f"r{i}", 1, "add.go", "go", GO_EXAMPLE, created_at=i)
        records.append(snapshot_to_record(snap))
        records.append(comment_to_record(ReviewComment(
            f"c{i}", f"r{i}", 1, "add.go", off, off, f"see {FUNC_URL}", "human", i * 10)))
    archive = _write(tmp_path / "archive.jsonl", records)
    examples = tmp_path / "examples.jsonl"
    assert main(["curate", "--archive", str(archive), "--out", str(examples)]) == 0
    lines = [json.loads(ln) for ln in examples.read_text().splitlines()]
    assert len(lines) == 12 and lines[0]["target"] == f"INSERT {off} COMMENT {FUNC_URL}"

    assert main(["split", "--examples", str(examples), "--cut1", "50", "--cut2", "90",
                 "--out-dir", str(tmp_path / "split")]) == 0
    sizes = {n: len((tmp_path / "split" / f"{n}.jsonl").read_text().splitlines())
             for n in ("train", "validation", "test")}
    assert sizes == {"train": 5, "validation": 4, "test": 3}

    out = tmp_path / "thresholds.cfg"
    assert main(["calibrate", "--examples", str(examples), "--out", str(out), "--strategy", "beam"]) == 0
    text = out.read_text()
    assert text.startswith("default ")
    assert f"{FUNC_URL} 0.0" in text


def test_replay_resolution_report(tmp_path, capsys):
    pairs = review_corpus(n_files=40, seed=2)
    corpus = _write(tmp_path / "corpus.jsonl", corpus_records(pairs))
    results = tmp_path / "results.jsonl"
    out = tmp_path / "report.json"
    assert main(["replay", "--corpus", str(corpus), "--results-log", str(results), "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["files_total"] == 40
    assert report["comments_total"] == len(results.read_text().splitlines())

    fb = _write(tmp_path / "fb.jsonl", [{"comment_id": "a", "kind": "thumbs_up"},
                                         {"comment_id": "b", "kind": "thumbs_down"}])
    assert main(["report", "--results", str(results), "--feedback", str(fb)]) == 0
    text = capsys.readouterr().out
    assert "useful ratio: 0.5000" in text and "cumulative" in text

    fixed = GO_EXAMPLE.replace(b"// Return a sum", b"// Add returns a sum")
    pair = {"initial": snapshot_to_record(FileSnapshot("r", 1, "a.go", "go", GO_EXAMPLE)),
            "merged": snapshot_to_record(FileSnapshot("r", 2, "a.go", "go", fixed))}
    pairs_path = _write(tmp_path / "pairs.jsonl", [pair])
    res = tmp_path / "res.json"
    assert main(["resolution", "--pairs", str(pairs_path), "--strategy", "greedy", "--out", str(res)]) == 0
    assert json.loads(res.read_text())["comment_absent_on_merged"] == 1


def test_config_dir_from_env(go_path, tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "conf"
    cfg.mkdir()
    (cfg / "thresholds.cfg").write_text("default 1.0\n")
    monkeypatch.setenv("BPREVIEW_CONFIG_DIR", str(cfg))
    assert main(["analyze", "--file", str(go_path)]) == 0
    assert capsys.readouterr().out == ""
    (cfg / "thresholds.cfg").write_text("default x\n")
    assert main(["analyze", "--file", str(go_path)]) == 1
