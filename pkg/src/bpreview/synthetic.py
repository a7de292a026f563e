"""Synthetic Go review corpora with planted, known violations.

The generator records every violation it writes (offset, line, URL, rule
score) as it assembles each file, so tests and demos can recount expected
results without running the analysis pipeline.
"""
from __future__ import annotations

import difflib
import random
from dataclasses import dataclass, field

from bpreview.backend import COMMENT_SENTENCE_URL, FUNC_DOC_URL, LINE_LENGTH_URL
from bpreview.corpus import FileSnapshot, snapshot_to_record

RULE_SCORES = {FUNC_DOC_URL: 0.99, COMMENT_SENTENCE_URL: 0.85, LINE_LENGTH_URL: 0.70}

_VERBS = ["computes", "returns", "builds", "checks", "loads", "stores", "merges", "formats"]
_NOUNS = ["value", "total", "index", "buffer", "record", "config", "result", "token"]


@dataclass(frozen=True)
class Planted:
    url: str
    offset: int
    line: int
    score: float


@dataclass
class SyntheticFile:
    snapshot: FileSnapshot
    old_content: bytes | None
    diff: str
    planted: list[Planted] = field(default_factory=list)

    @property
    def added_lines(self) -> set[int]:
        """New-file lines marked added, recomputed straight from difflib opcodes."""
        return added_lines_oracle(self.old_content or b"", self.snapshot.content)


def added_lines_oracle(old: bytes, new: bytes) -> set[int]:
    a = old.decode("utf-8").splitlines()
    b = new.decode("utf-8").splitlines()
    out: set[int] = set()
    for tag, _i1, _i2, j1, j2 in difflib.SequenceMatcher(None, a, b, autojunk=False).get_opcodes():
        if tag in ("replace", "insert"):
            out.update(range(j1 + 1, j2 + 1))
    return out


def unified_diff(old: bytes | None, new: bytes, path: str) -> str:
    a = old.decode("utf-8").splitlines(keepends=True) if old is not None else []
    b = new.decode("utf-8").splitlines(keepends=True)
    fromfile = f"a/{path}" if old is not None else "/dev/null"
    return "".join(difflib.unified_diff(a, b, fromfile=fromfile, tofile=f"b/{path}"))


class _Writer:
    def __init__(self) -> None:
        self.parts: list[str] = []
        self.size = 0
        self.line = 1
        self.planted: list[Planted] = []

    def emit(self, text: str, plant: str | None = None) -> None:
        if plant is not None:
            self.planted.append(Planted(plant, self.size, self.line, RULE_SCORES[plant]))
        self.parts.append(text + "\n")
        self.size += len(text.encode("utf-8")) + 1
        self.line += 1

    def content(self) -> bytes:
        return "".join(self.parts).encode("utf-8")


def _function(w: _Writer, rng: random.Random, name: str, variant: str, long_line: bool) -> None:
    verb, noun = rng.choice(_VERBS), rng.choice(_NOUNS)
    exported = name[0].isupper()
    if variant == "good":
        w.emit(f"// {name} {verb} the {noun}.")
    elif variant == "wrong_name":
        w.emit(f"// {verb.capitalize()} the {noun}.")
    elif variant == "wrong_name_no_period":
        w.emit(f"// {verb.capitalize()} the {noun}", plant=COMMENT_SENTENCE_URL)
    elif variant == "no_period":
        w.emit(f"// {name} {verb} the {noun}", plant=COMMENT_SENTENCE_URL)
    # variant "none": no doc comment at all
    has_doc = variant != "none"
    wrong = variant.startswith("wrong_name")
    w.emit(f"func {name}(x int) int {{", plant=FUNC_DOC_URL if (exported and has_doc and wrong) else None)
    if long_line:
        filler = ", ".join(f"x{i}" for i in range(40))
        w.emit(f"\t_ = []int{{{filler}}}", plant=LINE_LENGTH_URL)
    w.emit(f"\treturn x + {rng.randint(0, 99)}")
    w.emit("}")
    w.emit("")


def go_file(rng: random.Random, n_funcs: int, file_tag: str, violation_rate: float = 0.3) -> tuple[bytes, list[Planted]]:
    w = _Writer()
    w.emit(f"// Package p{file_tag} holds generated helpers.")
    w.emit(f"package p{file_tag}")
    w.emit("")
    for i in range(n_funcs):
        first = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"[i % 26] if rng.random() < 0.8 else "abcdefghijklmnopqrstuvwxyz"[i % 26]
        name = f"{first}fn{file_tag}x{i}"
        if rng.random() < violation_rate:
            variant = rng.choice(["wrong_name", "wrong_name_no_period", "no_period"])
        else:
            variant = rng.choice(["good", "good", "none"])
        _function(w, rng, name, variant, long_line=rng.random() < 0.1)
    return w.content(), w.planted


def _older_version(rng: random.Random, new: bytes, edit_rate: float) -> bytes | None:
    """Derive a plausible previous revision; None means the file is new."""
    if rng.random() < 0.1:
        return None
    lines = new.decode("utf-8").splitlines(keepends=True)
    old: list[str] = []
    for k, line in enumerate(lines):
        r = rng.random()
        if r < edit_rate / 2:
            old.append(f"// removed line {k}\n")
        elif r < edit_rate:
            continue  # line is new in this revision
        else:
            old.append(line)
        if rng.random() < 0.05:
            old.append(f"// dropped note {k}\n")
    return "".join(old).encode("utf-8")


def review_corpus(
    n_files: int = 200,
    files_per_review: int = 4,
    seed: int = 0,
    funcs_per_file: tuple[int, int] = (1, 6),
    violation_rate: float = 0.3,
    edit_rate: float = 0.3,
) -> list[tuple[SyntheticFile, str]]:
    """``n_files`` synthetic files grouped into reviews.

    Returns (file, review diff) pairs; the review diff concatenates the
    per-file diffs of every file in the same review.
    """
    rng = random.Random(seed)
    files: list[SyntheticFile] = []
    for k in range(n_files):
        review_id = f"r{k // files_per_review}"
        path = f"pkg{k}/f{k}.go"
        content, planted = go_file(rng, rng.randint(*funcs_per_file), str(k), violation_rate)
        old = _older_version(rng, content, edit_rate)
        snap = FileSnapshot(review_id, 2, path, "go", content, created_at=1_700_000_000 + k)
        files.append(SyntheticFile(snap, old, unified_diff(old, content, path), planted))
    diffs: dict[str, str] = {}
    for f in files:
        diffs[f.snapshot.review_id] = diffs.get(f.snapshot.review_id, "") + f.diff
    return [(f, diffs[f.snapshot.review_id]) for f in files]


def random_text_pair(rng: random.Random, n_lines: int) -> tuple[bytes, bytes]:
    """Random old/new text with insertions, deletions and replacements."""
    vocab = ["alpha", "beta", "gamma", "delta", "", "}", "{", "x := 1", "return"]
    old = [rng.choice(vocab) + (f" {rng.randint(0, 9)}" if rng.random() < 0.5 else "") for _ in range(n_lines)]
    new: list[str] = []
    for line in old:
        r = rng.random()
        if r < 0.1:
            continue
        if r < 0.2:
            new.append(line + " changed")
        else:
            new.append(line)
        if rng.random() < 0.1:
            new.append(rng.choice(vocab) + " added")
    def join(ls: list[str]) -> bytes:
        return ("\n".join(ls) + "\n").encode("utf-8") if ls else b""
    return join(old), join(new)


def corpus_records(pairs: list[tuple[SyntheticFile, str]]) -> list[dict]:
    """Replay-corpus records: one snapshot record per file, one diff record per review."""
    records = [snapshot_to_record(f.snapshot) for f, _diff in pairs]
    seen = set()
    for f, diff in pairs:
        rid = f.snapshot.review_id
        if rid not in seen:
            seen.add(rid)
            records.append({"kind": "diff", "review_id": rid, "diff": diff})
    return records
