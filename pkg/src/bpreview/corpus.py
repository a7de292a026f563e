"""Review-archive ingestion and training-example curation.

The archive is newline-delimited JSON, one record per line, each with a
``kind`` of ``snapshot`` or ``comment``.  Snapshot content is carried as a
UTF-8 string.  Preprocessing (:func:`extract_relevant_comments`) keeps
human comments that cite an allowlisted best-practice URL; curation
(:func:`curate_example`) turns each into a model input/target pair.
"""
from __future__ import annotations

import json
import re
import threading
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping, Sequence

from bpreview.target_dsl import serialize_target

DEFAULT_BUDGET = 8192
DEFAULT_PROMPT_TEXT = "[*] Task: Check language best practices."

COMMENT_PREFIX = {
    "go": "//",
    "java": "//",
    "cpp": "//",
    "c": "//",
    "kotlin": "//",
    "typescript": "//",
    "javascript": "//",
    "rust": "//",
    "dart": "//",
    "python": "#",
    "shell": "#",
    "sql": "--",
}

EXTENSION_LANGUAGE = {
    ".go": "go",
    ".java": "java",
    ".cc": "cpp",
    ".cpp": "cpp",
    ".h": "cpp",
    ".c": "c",
    ".kt": "kotlin",
    ".ts": "typescript",
    ".js": "javascript",
    ".rs": "rust",
    ".dart": "dart",
    ".py": "python",
    ".sh": "shell",
    ".sql": "sql",
}

DEFAULT_PROMPTS: dict[str, str] = {
    lang: f"{prefix} {DEFAULT_PROMPT_TEXT}" for lang, prefix in COMMENT_PREFIX.items()
}

_URL = re.compile(r"[A-Za-z][A-Za-z0-9+.\-]*://[^\s<>\"'`]+")
_TRAILING_PUNCT = ".,;:!?)]}"


class CorpusError(ValueError):
    pass


class UnsupportedLanguage(CorpusError):
    def __init__(self, language: str) -> None:
        super().__init__(f"unsupported language: {language!r}")
        self.language = language


@dataclass(frozen=True)
class FileSnapshot:
    review_id: str
    snapshot_id: int
    path: str
    language: str
    content: bytes
    created_at: int = 0

    def key(self) -> tuple[str, int, str]:
        return (self.review_id, self.snapshot_id, self.path)


@dataclass(frozen=True)
class ReviewComment:
    comment_id: str
    review_id: str
    snapshot_id: int
    path: str
    start_offset: int
    end_offset: int
    text: str
    author_kind: str = "human"
    created_at: int = 0

    def snapshot_key(self) -> tuple[str, int, str]:
        return (self.review_id, self.snapshot_id, self.path)


@dataclass(frozen=True)
class RelevantComment:
    comment: ReviewComment
    urls: tuple[str, ...]
    snapshot: FileSnapshot


@dataclass(frozen=True)
class TrainingExample:
    example_id: str
    input: str
    target: str
    language: str
    created_at: int | None
    review_id: str

    def to_record(self) -> dict:
        return {
            "example_id": self.example_id,
            "input": self.input,
            "target": self.target,
            "language": self.language,
            "created_at": self.created_at,
            "review_id": self.review_id,
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "TrainingExample":
        return cls(
            example_id=str(rec.get("example_id", "")),
            input=rec["input"],
            target=rec["target"],
            language=rec["language"],
            created_at=rec.get("created_at"),
            review_id=str(rec.get("review_id", "")),
        )


@dataclass(frozen=True)
class Skip:
    reason: str


@dataclass
class DatasetSplit:
    train: list[TrainingExample]
    validation: list[TrainingExample]
    test: list[TrainingExample]
    cut_train_val: int
    cut_val_test: int


@dataclass
class SkipReport:
    """Per-reason skip counters; safe to bump from several threads."""

    counts: Counter = field(default_factory=Counter)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def add(self, reason: str, n: int = 1) -> None:
        with self._lock:
            self.counts[reason] += n

    @property
    def total(self) -> int:
        return sum(self.counts.values())


# --- archive I/O -----------------------------------------------------------


def snapshot_from_record(rec: Mapping) -> FileSnapshot:
    content = rec["content"]
    if isinstance(content, str):
        content = content.encode("utf-8")
    return FileSnapshot(
        review_id=str(rec["review_id"]),
        snapshot_id=int(rec["snapshot_id"]),
        path=rec["path"],
        language=rec["language"],
        content=content,
        created_at=int(rec.get("created_at", 0)),
    )


def snapshot_to_record(snap: FileSnapshot) -> dict:
    return {
        "kind": "snapshot",
        "review_id": snap.review_id,
        "snapshot_id": snap.snapshot_id,
        "path": snap.path,
        "language": snap.language,
        "content": snap.content.decode("utf-8"),
        "created_at": snap.created_at,
    }


def comment_from_record(rec: Mapping) -> ReviewComment:
    return ReviewComment(
        comment_id=str(rec["comment_id"]),
        review_id=str(rec["review_id"]),
        snapshot_id=int(rec["snapshot_id"]),
        path=rec["path"],
        start_offset=int(rec["start_offset"]),
        end_offset=int(rec.get("end_offset", rec["start_offset"])),
        text=rec["text"],
        author_kind=rec.get("author_kind", "human"),
        created_at=int(rec.get("created_at", 0)),
    )


def comment_to_record(c: ReviewComment) -> dict:
    return {
        "kind": "comment",
        "comment_id": c.comment_id,
        "review_id": c.review_id,
        "snapshot_id": c.snapshot_id,
        "path": c.path,
        "start_offset": c.start_offset,
        "end_offset": c.end_offset,
        "text": c.text,
        "author_kind": c.author_kind,
        "created_at": c.created_at,
    }


def read_archive(
    stream: Iterable[str], report: SkipReport | None = None
) -> Iterator[FileSnapshot | ReviewComment]:
    """Decode archive lines; undecodable records are skipped and counted."""
    for line in stream:
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
            kind = rec.get("kind")
            if kind == "snapshot":
                yield snapshot_from_record(rec)
            elif kind == "comment":
                yield comment_from_record(rec)
            else:
                raise CorpusError(f"unknown kind {kind!r}")
        except (ValueError, KeyError, TypeError, AttributeError):
            if report is not None:
                report.add("malformed record")


def write_jsonl(records: Iterable[Mapping], fh: IO[str]) -> int:
    n = 0
    for rec in records:
        fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
        n += 1
    return n


def read_jsonl(path: str | Path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield json.loads(line)


def load_prompt_table(path: str | Path) -> dict[str, str]:
    """Read ``language<TAB>prompt`` lines."""
    table: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        if "\t" not in line:
            raise CorpusError(f"{path}:{lineno}: expected language<TAB>prompt")
        lang, prompt = line.split("\t", 1)
        table[lang.strip()] = prompt.rstrip("\n")
    return table


def load_allowlist(path: str | Path) -> list[str]:
    return [
        ln.strip()
        for ln in Path(path).read_text(encoding="utf-8").splitlines()
        if ln.strip() and not ln.lstrip().startswith("#")
    ]


def language_for_path(path: str) -> str | None:
    return EXTENSION_LANGUAGE.get(Path(path).suffix.lower())


# --- preprocessing ---------------------------------------------------------


def extract_urls(text: str) -> list[str]:
    urls = []
    for m in _URL.finditer(text):
        url = m.group(0).rstrip(_TRAILING_PUNCT)
        if url not in urls:
            urls.append(url)
    return urls


def extract_relevant_comments(
    archive: Iterable[FileSnapshot | ReviewComment],
    allowlist: Sequence[str],
    report: SkipReport | None = None,
) -> Iterator[RelevantComment]:
    if not allowlist:
        raise CorpusError("allowlist must not be empty")
    snapshots: dict[tuple[str, int, str], FileSnapshot] = {}
    comments: list[ReviewComment] = []
    for rec in archive:
        if isinstance(rec, FileSnapshot):
            snapshots[rec.key()] = rec
        else:
            comments.append(rec)

    for c in comments:
        if c.author_kind != "human" or not c.text:
            continue
        urls = tuple(u for u in extract_urls(c.text) if any(u.startswith(p) for p in allowlist))
        if not urls:
            continue
        snap = snapshots.get(c.snapshot_key())
        if snap is None:
            if report is not None:
                report.add("missing snapshot")
            continue
        if not 0 <= c.start_offset <= c.end_offset <= len(snap.content):
            if report is not None:
                report.add("offset out of range")
            continue
        yield RelevantComment(comment=c, urls=urls, snapshot=snap)


# --- curation --------------------------------------------------------------


def _prompt_for(language: str, prompt_table: Mapping[str, str]) -> str:
    try:
        return prompt_table[language]
    except KeyError:
        raise UnsupportedLanguage(language) from None


def source_budget(prompt: str, budget: int) -> int:
    """Bytes of source that fit after the prompt line and its newline."""
    room = budget - len(prompt.encode("utf-8")) - 1
    if room <= 0:
        raise CorpusError(f"budget {budget} too small for prompt")
    return room


def _utf8_prefix(data: bytes, limit: int) -> bytes:
    if len(data) <= limit:
        return data
    cut = limit
    # back off over continuation bytes so the cut never splits a character
    while cut > 0 and (data[cut] & 0xC0) == 0x80:
        cut -= 1
    return data[:cut]


def kept_source(snapshot: FileSnapshot, prompt_table: Mapping[str, str], budget: int) -> bytes:
    prompt = _prompt_for(snapshot.language, prompt_table)
    return _utf8_prefix(snapshot.content, source_budget(prompt, budget))


def build_model_input(
    snapshot: FileSnapshot,
    prompt_table: Mapping[str, str] = DEFAULT_PROMPTS,
    budget: int = DEFAULT_BUDGET,
) -> str:
    prompt = _prompt_for(snapshot.language, prompt_table)
    body = _utf8_prefix(snapshot.content, source_budget(prompt, budget))
    return prompt + "\n" + body.decode("utf-8", errors="replace")


def split_model_input(text: str) -> tuple[str, bytes]:
    """Inverse of :func:`build_model_input`: (prompt line, source bytes)."""
    prompt, _, body = text.partition("\n")
    return prompt, body.encode("utf-8")


def curate_example(
    rc: RelevantComment,
    prompt_table: Mapping[str, str] = DEFAULT_PROMPTS,
    budget: int = DEFAULT_BUDGET,
) -> TrainingExample | Skip:
    snap = rc.snapshot
    try:
        kept = kept_source(snap, prompt_table, budget)
    except UnsupportedLanguage:
        return Skip("unsupported language")
    offset = rc.comment.start_offset
    if offset > len(snap.content):
        return Skip("offset out of range")
    truncated = len(kept) < len(snap.content)
    if truncated and offset >= len(kept):
        return Skip("target truncated")
    target = serialize_target([(offset, url) for url in rc.urls])
    return TrainingExample(
        example_id=rc.comment.comment_id,
        input=build_model_input(snap, prompt_table, budget),
        target=target,
        language=snap.language,
        created_at=rc.comment.created_at,
        review_id=rc.comment.review_id,
    )


def curate(
    relevant: Iterable[RelevantComment],
    prompt_table: Mapping[str, str] = DEFAULT_PROMPTS,
    budget: int = DEFAULT_BUDGET,
    report: SkipReport | None = None,
) -> Iterator[TrainingExample]:
    for rc in relevant:
        ex = curate_example(rc, prompt_table, budget)
        if isinstance(ex, Skip):
            if report is not None:
                report.add(ex.reason)
            continue
        yield ex


def comments_per_file(relevant: Iterable[RelevantComment]) -> Counter:
    """Histogram: number of relevant comments -> number of files with that many."""
    per_file = Counter(rc.snapshot.key() for rc in relevant)
    return Counter(per_file.values())


def temporal_split(
    examples: Sequence[TrainingExample], cut1: int, cut2: int
) -> DatasetSplit:
    if not cut1 < cut2:
        raise ValueError("cut1 must precede cut2")
    train, val, test = [], [], []
    for ex in examples:
        if ex.created_at is None:
            raise ValueError(f"example {ex.example_id!r} has no created_at")
        if ex.created_at < cut1:
            train.append(ex)
        elif ex.created_at < cut2:
            val.append(ex)
        else:
            test.append(ex)
    return DatasetSplit(train, val, test, cut1, cut2)
