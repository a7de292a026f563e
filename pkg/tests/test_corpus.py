from __future__ import annotations

import io
import json
import random

import pytest

from bpreview.corpus import (
    DEFAULT_PROMPTS,
    FileSnapshot,
    ReviewComment,
    Skip,
    SkipReport,
    TrainingExample,
    UnsupportedLanguage,
    build_model_input,
    comment_to_record,
    comments_per_file,
    curate_example,
    extract_relevant_comments,
    extract_urls,
    read_archive,
    snapshot_to_record,
    temporal_split,
)
from bpreview.target_dsl import parse_target
from conftest import FUNC_URL, GO_EXAMPLE, count_offset_of_func

GO_PROMPT = "// [*] Task: Check language best practices."


def _comment(text, author="human", offset=0, snapshot_id=1, cid="c1", created_at=50):
    return ReviewComment(cid, "rev1", snapshot_id, "addition/add.go", offset, offset, text, author, created_at)


def test_extract_relevant_comment(go_snapshot):
    c = _comment("see https://go.dev/doc/comment#func")
    [rc] = extract_relevant_comments([go_snapshot, c], ["https://go.dev/"])
    assert rc.urls == (FUNC_URL,)
    assert rc.snapshot is go_snapshot


def test_comments_without_urls_or_not_human_are_excluded(go_snapshot):
    records = [
        go_snapshot,
        _comment("no link here", cid="a"),
        _comment("see https://go.dev/doc/comment#func", author="automated", cid="b"),
        _comment("see https://example.com/x", cid="c"),
    ]
    assert list(extract_relevant_comments(records, ["https://go.dev/"])) == []


def test_missing_snapshot_is_counted_not_fatal(go_snapshot):
    report = SkipReport()
    records = [go_snapshot, _comment("https://go.dev/doc/comment#func", snapshot_id=9)]
    assert list(extract_relevant_comments(records, ["https://go.dev/"], report)) == []
    assert report.counts["missing snapshot"] == 1


def test_extraction_is_subset_and_idempotent(go_snapshot):
    records = [go_snapshot] + [
        _comment(f"note {i} https://go.dev/doc/comment#func" if i % 2 else f"note {i}", cid=str(i))
        for i in range(10)
    ]
    first = list(extract_relevant_comments(records, ["https://go.dev/"]))
    second = list(extract_relevant_comments(records, ["https://go.dev/"]))
    assert first == second
    assert {rc.comment.comment_id for rc in first} == {"1", "3", "5", "7", "9"}


def test_url_extraction_strips_trailing_punctuation():
    assert extract_urls("See (https://go.dev/doc/comment#func). Also https://a.b/c, ok") == [
        FUNC_URL, "https://a.b/c"]


def test_go_model_input_starts_with_prompt(go_snapshot):
    text = build_model_input(go_snapshot)
    assert text.startswith(GO_PROMPT + "\n")
    assert text.encode() == GO_PROMPT.encode() + b"\n" + GO_EXAMPLE


def test_truncation_to_budget():
    snap = FileSnapshot("r", 1, "big.go", "go", b"x" * 10_000)
    text = build_model_input(snap, budget=8192)
    raw = text.encode("utf-8")
    assert len(raw) == 8192
    assert raw.startswith(GO_PROMPT.encode() + b"\n")
    # independent recount: prompt + newline + the first (8192 - 45) source bytes
    assert raw[len(GO_PROMPT) + 1:] == b"x" * (8192 - len(GO_PROMPT.encode()) - 1)


def test_truncation_never_splits_a_character():
    snap = FileSnapshot("r", 1, "u.go", "go", "é".encode() * 100)
    text = build_model_input(snap, budget=len(GO_PROMPT) + 1 + 11)
    assert text.endswith("é" * 5)


def test_unsupported_language():
    snap = FileSnapshot("r", 1, "a.cob", "cobol", b"x")
    with pytest.raises(UnsupportedLanguage, match="cobol"):
        build_model_input(snap)


def test_curate_go_example(go_snapshot):
    offset = count_offset_of_func(GO_EXAMPLE)
    [rc] = extract_relevant_comments(
        [go_snapshot, _comment("Doc should start with the name: https://go.dev/doc/comment#func", offset=offset)],
        ["https://go.dev/"])
    ex = curate_example(rc)
    assert isinstance(ex, TrainingExample)
    assert ex.target == f"INSERT {offset} COMMENT {FUNC_URL}"
    assert ex.input.startswith(GO_PROMPT)
    assert ex.created_at == 50


def test_curate_offset_zero_and_multiple_urls(go_snapshot):
    [rc] = extract_relevant_comments(
        [go_snapshot, _comment("https://go.dev/a and https://go.dev/b")], ["https://go.dev/"])
    ex = curate_example(rc)
    assert ex.target == "INSERT 0 COMMENT https://go.dev/a INSERT 0 COMMENT https://go.dev/b"


def test_curate_skips_truncated_target():
    content = b"a\n" * 100
    snap = FileSnapshot("rev1", 1, "addition/add.go", "go", content)
    [rc] = extract_relevant_comments([snap, _comment("https://go.dev/x", offset=150)], ["https://go.dev/"])
    assert curate_example(rc, budget=len(GO_PROMPT) + 1 + 100) == Skip("target truncated")
    assert isinstance(curate_example(rc, budget=8192), TrainingExample)


def test_curated_targets_within_source():
    rng = random.Random(3)
    snaps, comments = [], []
    for i in range(30):
        content = bytes(rng.choice(b"ab \n") for _ in range(rng.randint(0, 300)))
        snaps.append(FileSnapshot("rev", i, f"f{i}.go", "go", content))
        off = rng.randint(0, len(content))
        comments.append(ReviewComment(f"c{i}", "rev", i, f"f{i}.go", off, off, "https://go.dev/z", "human", i))
    for rc in extract_relevant_comments(snaps + comments, ["https://go.dev/"]):
        ex = curate_example(rc, budget=200)
        if isinstance(ex, Skip):
            continue
        for off, _url in parse_target(ex.target):
            assert 0 <= off <= len(rc.snapshot.content)


def test_read_archive_ndjson(go_snapshot):
    lines = [
        json.dumps(snapshot_to_record(go_snapshot)),
        json.dumps(comment_to_record(_comment("https://go.dev/doc/comment#func"))),
        "{not json",
        json.dumps({"kind": "mystery"}),
        "",
    ]
    report = SkipReport()
    records = list(read_archive(io.StringIO("\n".join(lines)), report))
    assert records[0] == go_snapshot
    assert isinstance(records[1], ReviewComment)
    assert report.counts["malformed record"] == 2


def _ex(ts, i=0):
    return TrainingExample(f"e{i}", "in", "EMPTY", "go", ts, "r")


def test_temporal_split_small():
    split = temporal_split([_ex(10, 1), _ex(20, 2), _ex(30, 3)], 15, 25)
    assert [e.created_at for e in split.train] == [10]
    assert [e.created_at for e in split.validation] == [20]
    assert [e.created_at for e in split.test] == [30]


def test_temporal_split_all_before_cut():
    split = temporal_split([_ex(1), _ex(2)], 15, 25)
    assert split.validation == [] and split.test == []


def test_temporal_split_requires_timestamps():
    with pytest.raises(ValueError):
        temporal_split([_ex(None)], 1, 2)
    with pytest.raises(ValueError):
        temporal_split([], 5, 5)


def test_temporal_split_matches_filter_and_count():
    rng = random.Random(7)
    examples = [_ex(rng.randint(0, 1000), i) for i in range(1000)]
    split = temporal_split(examples, 300, 700)
    # brute-force partition oracle
    want = {"train": 0, "validation": 0, "test": 0}
    for e in examples:
        want["train" if e.created_at < 300 else "validation" if e.created_at < 700 else "test"] += 1
    assert (len(split.train), len(split.validation), len(split.test)) == (
        want["train"], want["validation"], want["test"])
    ids = [e.example_id for part in (split.train, split.validation, split.test) for e in part]
    assert sorted(ids) == sorted(e.example_id for e in examples)
    assert max(e.created_at for e in split.train) < 300 <= min(e.created_at for e in split.validation)
    assert max(e.created_at for e in split.validation) < 700 <= min(e.created_at for e in split.test)


def test_comment_multiplicity_histogram(go_snapshot):
    other = FileSnapshot("rev1", 2, "addition/add.go", "go", GO_EXAMPLE)
    records = [go_snapshot, other,
               _comment("https://go.dev/a", cid="1"), _comment("https://go.dev/b", cid="2"),
               _comment("https://go.dev/c", cid="3", snapshot_id=2)]
    hist = comments_per_file(extract_relevant_comments(records, ["https://go.dev/"]))
    assert hist == {2: 1, 1: 1}


def test_default_prompts_use_language_comment_style():
    assert DEFAULT_PROMPTS["go"] == GO_PROMPT
    assert DEFAULT_PROMPTS["python"].startswith("# ")
