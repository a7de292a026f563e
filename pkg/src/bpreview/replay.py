"""Offline replay over historical reviews and deployment metrics.

Everything here is read-only with respect to any review system: replays
write would-be comments to an append-only results log, feedback is
appended to its own log, and the metrics are recomputed from those logs.
"""
from __future__ import annotations

import difflib
import json
import logging
import os
import threading
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

from bpreview.backend import TransportError
from bpreview.corpus import FileSnapshot, RelevantComment
from bpreview.pipeline import (
    AnalysisConfig,
    PostedComment,
    StageStats,
    analyze_snapshot,
    changed_lines_from_diff,
)

log = logging.getLogger(__name__)

FEEDBACK_KINDS = ("thumbs_up", "thumbs_down", "please_fix")
SURFACES = ("review", "ide")
MAPPING_METHOD = "line-diff"


class JsonlLog:
    """Append-only newline-delimited JSON file with a single-writer lock."""

    def __init__(self, path: str | Path, fsync: bool = False) -> None:
        self.path = Path(path)
        self.fsync = fsync
        self._lock = threading.Lock()

    def append(self, record: Mapping) -> None:
        line = json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n"
        with self._lock, open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line)
            fh.flush()
            if self.fsync:
                os.fsync(fh.fileno())

    def records(self) -> list[dict]:
        if not self.path.exists():
            return []
        with open(self.path, encoding="utf-8") as fh:
            return [json.loads(ln) for ln in fh if ln.strip()]

    def __len__(self) -> int:
        return len(self.records())


# --- replay ----------------------------------------------------------------


@dataclass
class ReplayReport:
    files_total: int = 0
    files_changed: int = 0
    files_with_comments: int = 0
    reviews_total: int = 0
    reviews_with_comments: int = 0
    comments_total: int = 0
    errors: int = 0
    url_histogram: Counter = field(default_factory=Counter)
    stage_counts: dict[str, int] = field(default_factory=dict)
    suppressed_by_reason: Counter = field(default_factory=Counter)

    @property
    def file_posting_frequency(self) -> float | None:
        return self.files_with_comments / self.files_changed if self.files_changed else None

    @property
    def review_posting_frequency(self) -> float | None:
        return self.reviews_with_comments / self.reviews_total if self.reviews_total else None

    def to_record(self) -> dict:
        return {
            "files_total": self.files_total,
            "files_changed": self.files_changed,
            "files_with_comments": self.files_with_comments,
            "reviews_total": self.reviews_total,
            "reviews_with_comments": self.reviews_with_comments,
            "comments_total": self.comments_total,
            "errors": self.errors,
            "file_posting_frequency": self.file_posting_frequency,
            "review_posting_frequency": self.review_posting_frequency,
            "url_histogram": dict(sorted(self.url_histogram.items())),
            "stage_counts": self.stage_counts,
            "suppressed_by_reason": dict(self.suppressed_by_reason),
        }


def results_record(snapshot: FileSnapshot, comment: PostedComment) -> dict:
    return {
        "review_id": snapshot.review_id,
        "path": snapshot.path,
        "snapshot_id": snapshot.snapshot_id,
        "offset": comment.origin_offset,
        "url": comment.url,
        "line": comment.line,
        "score": comment.score,
    }


def replay_reviews(
    reviews: Iterable[tuple[FileSnapshot, str | None]],
    cfg: AnalysisConfig,
    results_log: JsonlLog | None = None,
) -> ReplayReport:
    """Analyze every changed file; a file with ``diff is None`` counts as wholly new."""
    report = ReplayReport()
    stats = StageStats()
    seen_reviews: set[str] = set()
    reviews_hit: set[str] = set()
    parsed: dict[str, dict] = {}
    for snapshot, diff in reviews:
        report.files_total += 1
        seen_reviews.add(snapshot.review_id)
        changed = None
        if diff is not None:
            if diff not in parsed:
                parsed[diff] = changed_lines_from_diff(diff)
            changed = parsed[diff]
            if snapshot.path not in changed:
                continue
        report.files_changed += 1
        try:
            comments = analyze_snapshot(snapshot, None, cfg, stats, changed=changed)
        except (TransportError, OSError) as exc:
            report.errors += 1
            log.warning("replay skipped %s/%s: %s", snapshot.review_id, snapshot.path, exc)
            continue
        if comments:
            report.files_with_comments += 1
            reviews_hit.add(snapshot.review_id)
        for c in comments:
            report.comments_total += 1
            report.url_histogram[c.url] += 1
            if results_log is not None:
                results_log.append(results_record(snapshot, c))
    report.reviews_total = len(seen_reviews)
    report.reviews_with_comments = len(reviews_hit)
    rec = stats.to_record()
    report.stage_counts = {k: rec[k] for k in
                           ("raw", "after_thresholds", "after_changed_lines",
                            "after_suppression", "posted", "missing_summaries")}
    report.suppressed_by_reason = Counter(s.reason for s in stats.suppressed)
    return report


# --- URL distribution and coverage -----------------------------------------


class DistributionRow(NamedTuple):
    rank: int
    url: str
    count: int
    share: float
    cumulative_share: float


def url_distribution(histogram: Mapping[str, int]) -> list[DistributionRow]:
    if any(c < 0 for c in histogram.values()):
        raise ValueError("negative count in histogram")
    total = sum(histogram.values())
    if total == 0:
        return []
    ordered = sorted(histogram.items(), key=lambda kv: (-kv[1], kv[0]))
    rows = []
    running = 0
    for rank, (url, count) in enumerate(ordered, 1):
        running += count
        rows.append(DistributionRow(rank, url, count, count / total, running / total))
    return rows


def histogram_from_results(records: Iterable[Mapping]) -> Counter:
    return Counter(r["url"] for r in records)


def human_coverage(auto_urls: Iterable[str], human_comments: Sequence[RelevantComment]) -> float | None:
    if not human_comments:
        return None
    auto = set(auto_urls)
    covered = sum(1 for rc in human_comments if any(u in auto for u in rc.urls))
    return covered / len(human_comments)


# --- line mapping and resolution -------------------------------------------


def line_mapping(old_source: bytes, new_source: bytes) -> dict[int, int]:
    """1-based old line -> new line for lines inside unchanged runs."""
    old = old_source.splitlines()
    new = new_source.splitlines()
    sm = difflib.SequenceMatcher(None, old, new, autojunk=False)
    mapping = {}
    for a, b, size in sm.get_matching_blocks():
        for k in range(size):
            mapping[a + k + 1] = b + k + 1
    return mapping


def map_line(old_source: bytes, new_source: bytes, old_line: int) -> int | None:
    return line_mapping(old_source, new_source).get(old_line)


@dataclass(frozen=True)
class SnapshotPair:
    initial: FileSnapshot
    merged: FileSnapshot
    comments_on_initial: tuple[PostedComment, ...]

    def __post_init__(self) -> None:
        if (self.initial.review_id, self.initial.path) != (self.merged.review_id, self.merged.path):
            raise ValueError("snapshot pair must share review_id and path")
        if not self.initial.snapshot_id < self.merged.snapshot_id:
            raise ValueError("initial snapshot must precede merged snapshot")


class Classification(NamedTuple):
    pair_index: int
    url: str
    line: int
    mapped_line: int | None
    absent: bool


@dataclass
class ResolutionReport:
    pairs_total: int = 0
    pairs_skipped: int = 0
    comments_examined: int = 0
    comment_absent_on_merged: int = 0
    manual_confirmation_factor: float = 1.0
    mapping_method: str = MAPPING_METHOD
    per_url: dict[str, dict[str, int]] = field(default_factory=dict)
    classifications: list[Classification] = field(default_factory=list)

    @property
    def absent_fraction(self) -> float | None:
        if not self.comments_examined:
            return None
        return self.comment_absent_on_merged / self.comments_examined

    @property
    def resolution_rate_estimate(self) -> float | None:
        frac = self.absent_fraction
        return None if frac is None else frac * self.manual_confirmation_factor

    def to_record(self) -> dict:
        return {
            "pairs_total": self.pairs_total,
            "pairs_skipped": self.pairs_skipped,
            "comments_examined": self.comments_examined,
            "comment_absent_on_merged": self.comment_absent_on_merged,
            "absent_fraction": self.absent_fraction,
            "manual_confirmation_factor": self.manual_confirmation_factor,
            "resolution_rate_estimate": self.resolution_rate_estimate,
            "mapping_method": self.mapping_method,
            "per_url": self.per_url,
        }


def estimate_resolution(
    pairs: Sequence[SnapshotPair],
    cfg: AnalysisConfig,
    manual_confirmation_factor: float = 1.0,
    same_url_anywhere: bool = False,
) -> ResolutionReport:
    """Count initial-snapshot comments no longer predicted on the merged snapshot.

    By default a comment is present only if the merged analysis has the same
    URL on the mapped line; ``same_url_anywhere`` relaxes that to any line.
    """
    if not 0.0 <= manual_confirmation_factor <= 1.0:
        raise ValueError("manual_confirmation_factor must be in [0, 1]")
    report = ResolutionReport(manual_confirmation_factor=manual_confirmation_factor)
    per_url: dict[str, Counter] = defaultdict(Counter)
    for i, pair in enumerate(pairs):
        report.pairs_total += 1
        try:
            merged_comments = analyze_snapshot(pair.merged, None, cfg)
        except (TransportError, OSError) as exc:
            report.pairs_skipped += 1
            log.warning("resolution skipped pair %d: %s", i, exc)
            continue
        mapping = line_mapping(pair.initial.content, pair.merged.content)
        found = {(c.url, c.line) for c in merged_comments}
        urls_anywhere = {c.url for c in merged_comments}
        for c in pair.comments_on_initial:
            mapped = mapping.get(c.line)
            if same_url_anywhere:
                absent = c.url not in urls_anywhere
            else:
                absent = mapped is None or (c.url, mapped) not in found
            report.comments_examined += 1
            report.comment_absent_on_merged += absent
            per_url[c.url]["examined"] += 1
            per_url[c.url]["absent"] += absent
            report.classifications.append(Classification(i, c.url, c.line, mapped, absent))
    report.per_url = {u: dict(c) for u, c in sorted(per_url.items())}
    return report


# --- feedback --------------------------------------------------------------


@dataclass(frozen=True)
class FeedbackEvent:
    comment_id: str
    kind: str
    surface: str = "review"
    created_at: int = 0
    reporter: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in FEEDBACK_KINDS:
            raise ValueError(f"invalid feedback kind {self.kind!r}")
        if self.surface not in SURFACES:
            raise ValueError(f"invalid surface {self.surface!r}")
        if not self.comment_id:
            raise ValueError("comment_id is required")

    @classmethod
    def from_record(cls, rec: Mapping) -> "FeedbackEvent":
        if not isinstance(rec, Mapping):
            raise ValueError("feedback event must be an object")
        try:
            return cls(
                comment_id=str(rec["comment_id"]),
                kind=rec["kind"],
                surface=rec.get("surface", "review"),
                created_at=int(rec.get("created_at", 0)),
                reporter=rec.get("reporter"),
            )
        except KeyError as exc:
            raise ValueError(f"missing field {exc}") from None

    def to_record(self) -> dict:
        rec = {"comment_id": self.comment_id, "kind": self.kind,
               "surface": self.surface, "created_at": self.created_at}
        if self.reporter is not None:
            rec["reporter"] = self.reporter
        return rec


class FeedbackLog(JsonlLog):
    def __init__(self, path: str | Path) -> None:
        super().__init__(path, fsync=True)

    def events(self) -> list[FeedbackEvent]:
        return [FeedbackEvent.from_record(r) for r in self.records()]


def record_feedback(event: FeedbackEvent, log: FeedbackLog) -> dict:
    log.append(event.to_record())
    return {"ok": True, "comment_id": event.comment_id}


def useful_ratio(events: Iterable[FeedbackEvent]) -> float | None:
    """Positive comments over all comments with feedback.

    A comment with any thumbs-down is negative, even if it also got
    positive reactions.
    """
    kinds: dict[str, set[str]] = defaultdict(set)
    for ev in events:
        kinds[ev.comment_id].add(ev.kind)
    if not kinds:
        return None
    positive = sum(1 for ks in kinds.values() if "thumbs_down" not in ks)
    return positive / len(kinds)
