"""Turning raw backend predictions into postable review comments.

Stages run in a fixed order, each one only ever removing predictions:

1. confidence thresholds (global default, per-URL overrides, strict ``>``)
2. changed-line filter, when a unified diff is supplied
3. suppression rules (URL pattern + optional source regex + optional path glob)

Survivors are rendered as :class:`PostedComment` objects spanning the whole
line that holds the predicted offset.
"""
from __future__ import annotations

import fnmatch
import json
import logging
import os
import re
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, NamedTuple, Sequence

from bpreview.backend import (
    BEAM,
    GREEDY,
    Backend,
    DecodeConfig,
    ReferenceBackend,
    ViolationPrediction,
    merge_candidates,
)
from bpreview.corpus import DEFAULT_BUDGET, DEFAULT_PROMPTS, FileSnapshot, build_model_input
from bpreview.target_dsl import LineCol, anchor_offset, line_bounds

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.98
PLACEHOLDER_SUMMARY = "See linked guidance."

ChangedLineSet = dict[str, set[int]]


class ConfigError(ValueError):
    pass


class DiffParseError(ValueError):
    def __init__(self, message: str, lineno: int) -> None:
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


# --- thresholds ------------------------------------------------------------


@dataclass(frozen=True)
class ThresholdTable:
    default_t: float = DEFAULT_THRESHOLD
    per_url: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 <= self.default_t <= 1.0:
            raise ConfigError(f"default threshold {self.default_t} outside [0, 1]")
        for url, t in self.per_url.items():
            if not 0.0 <= t <= 1.0:
                raise ConfigError(f"threshold {t} for {url} outside [0, 1]")
        object.__setattr__(self, "per_url", MappingProxyType(dict(self.per_url)))

    def threshold_for(self, url: str) -> float:
        return self.per_url.get(url, self.default_t)

    def dumps(self) -> str:
        lines = [f"default {self.default_t!r}"]
        lines += [f"{url} {t!r}" for url, t in sorted(self.per_url.items())]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "ThresholdTable":
        default_t = DEFAULT_THRESHOLD
        per_url: dict[str, float] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ConfigError(f"thresholds line {lineno}: expected '<key> <t>'")
            key, value = parts
            try:
                t = float(value)
            except ValueError:
                raise ConfigError(f"thresholds line {lineno}: bad number {value!r}") from None
            if key == "default":
                default_t = t
            elif key in per_url:
                raise ConfigError(f"thresholds line {lineno}: duplicate url {key}")
            else:
                per_url[key] = t
        return cls(default_t, per_url)

    @classmethod
    def load(cls, path: str | Path) -> "ThresholdTable":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def apply_thresholds(
    preds: Iterable[ViolationPrediction], table: ThresholdTable
) -> list[ViolationPrediction]:
    return [p for p in preds if p.score > table.threshold_for(p.url)]


# --- diffs -----------------------------------------------------------------

_HUNK = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@")


def _header_path(line: str) -> str:
    path = line[4:].split("\t", 1)[0].rstrip("\r\n")
    if path.startswith('"') and path.endswith('"'):
        path = path[1:-1]
    return path


def _strip_prefix(path: str, prefix: str) -> str:
    return path[len(prefix):] if path.startswith(prefix) else path


def changed_lines_from_diff(diff_text: str) -> ChangedLineSet:
    """New-file line numbers of ``+`` lines, keyed by the ``+++`` path."""
    changed: ChangedLineSet = {}
    lines = diff_text.splitlines()
    old_path: str | None = None
    path: str | None = None
    old_left = new_left = 0
    new_line = 0
    for lineno, line in enumerate(lines, 1):
        if old_left > 0 or new_left > 0:
            tag = line[:1]
            if tag == "+":
                if path is not None:
                    changed[path].add(new_line)
                new_line += 1
                new_left -= 1
            elif tag == "-":
                old_left -= 1
            elif tag == " " or line == "":
                new_line += 1
                new_left -= 1
                old_left -= 1
            elif tag == "\\":
                continue
            else:
                raise DiffParseError("hunk shorter than its header claims", lineno)
            if old_left < 0 or new_left < 0:
                raise DiffParseError("hunk longer than its header claims", lineno)
            continue
        if line.startswith("\\"):
            continue
        if line.startswith("--- "):
            old_path = _header_path(line)
        elif line.startswith("+++ "):
            new_path = _header_path(line)
            if new_path == "/dev/null":
                path = None
            else:
                if old_path is None or old_path == "/dev/null" or old_path.startswith("a/"):
                    new_path = _strip_prefix(new_path, "b/")
                path = new_path
                changed.setdefault(path, set())
        elif line.startswith("@@"):
            m = _HUNK.match(line)
            if m is None:
                raise DiffParseError(f"malformed hunk header {line!r}", lineno)
            old_left = int(m.group(2)) if m.group(2) is not None else 1
            new_start = int(m.group(3))
            new_left = int(m.group(4)) if m.group(4) is not None else 1
            new_line = new_start if new_left else new_start + 1
        # anything else (diff --git, index, mode lines, prose) is ignored
    if old_left > 0 or new_left > 0:
        raise DiffParseError("diff ends inside a hunk", len(lines))
    return changed


def filter_changed_lines(
    preds: Iterable[ViolationPrediction],
    source: bytes,
    changed: ChangedLineSet,
    path: str,
) -> list[ViolationPrediction]:
    lines = changed.get(path)
    if not lines:
        return []
    return [p for p in preds if anchor_offset(source, p.offset).line in lines]


# --- suppression -----------------------------------------------------------


@dataclass(frozen=True)
class SuppressionRule:
    url_pattern: str
    source_pattern: str | None = None
    path_glob: str | None = None
    reason: str = ""
    active: bool = True
    whole_file: bool = False
    _regex: re.Pattern | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.url_pattern:
            raise ConfigError("suppression rule needs a url_pattern")
        if self.source_pattern is not None:
            try:
                object.__setattr__(self, "_regex", re.compile(self.source_pattern.encode("utf-8")))
            except re.error as exc:
                raise ConfigError(f"bad source_pattern {self.source_pattern!r}: {exc}") from None

    def matches(self, pred: ViolationPrediction, source: bytes, path: str) -> bool:
        if not self.active:
            return False
        if not (pred.url == self.url_pattern or pred.url.startswith(self.url_pattern)):
            return False
        if self.path_glob is not None and not fnmatch.fnmatchcase(path, self.path_glob):
            return False
        if self._regex is not None:
            if self.whole_file:
                scope = source
            else:
                start, end = line_bounds(source, pred.offset)
                scope = source[start:end]
            if self._regex.search(scope) is None:
                return False
        return True

    @classmethod
    def from_record(cls, rec: Mapping) -> "SuppressionRule":
        if not isinstance(rec, Mapping):
            raise ConfigError("suppression rule must be a JSON object")
        unknown = set(rec) - {"url_pattern", "source_pattern", "path_glob", "reason", "active", "whole_file"}
        if unknown:
            raise ConfigError(f"unknown suppression rule fields: {sorted(unknown)}")
        return cls(
            url_pattern=rec.get("url_pattern", ""),
            source_pattern=rec.get("source_pattern"),
            path_glob=rec.get("path_glob"),
            reason=rec.get("reason", ""),
            active=bool(rec.get("active", True)),
            whole_file=bool(rec.get("whole_file", False)),
        )


def load_rules(path: str | Path) -> tuple[SuppressionRule, ...]:
    rules = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rules.append(SuppressionRule.from_record(json.loads(line)))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from None
    return tuple(rules)


class RuleStore:
    """Suppression rules backed by a file, reloaded when the file changes.

    A reload either installs a complete new rule tuple or leaves the old one
    in place; readers never see a partially parsed file.
    """

    def __init__(self, path: str | Path | None = None, rules: Sequence[SuppressionRule] = ()) -> None:
        self.path = Path(path) if path is not None else None
        self._rules: tuple[SuppressionRule, ...] = tuple(rules)
        self._stamp: tuple[int, int] | None = None
        self._lock = threading.Lock()
        if self.path is not None:
            self.reload()

    def _file_stamp(self) -> tuple[int, int] | None:
        try:
            st = os.stat(self.path)
        except FileNotFoundError:
            return None
        return (st.st_mtime_ns, st.st_size)

    def reload(self) -> tuple[SuppressionRule, ...]:
        """Re-read the file; raises ConfigError and keeps old rules if malformed."""
        if self.path is None:
            return self._rules
        with self._lock:
            stamp = self._file_stamp()
            rules = load_rules(self.path) if stamp is not None else ()
            self._rules = rules
            self._stamp = stamp
        return rules

    def rules(self) -> tuple[SuppressionRule, ...]:
        if self.path is not None and self._file_stamp() != self._stamp:
            try:
                self.reload()
            except ConfigError as exc:
                log.error("suppression reload failed, keeping previous rules: %s", exc)
        return self._rules


class Suppressed(NamedTuple):
    prediction: ViolationPrediction
    reason: str


def apply_suppressions(
    preds: Iterable[ViolationPrediction],
    source: bytes,
    path: str,
    rules: Sequence[SuppressionRule],
) -> tuple[list[ViolationPrediction], list[Suppressed]]:
    kept: list[ViolationPrediction] = []
    suppressed: list[Suppressed] = []
    for p in preds:
        rule = next((r for r in rules if r.matches(p, source, path)), None)
        if rule is None:
            kept.append(p)
        else:
            suppressed.append(Suppressed(p, rule.reason))
    return kept, suppressed


# --- rendering -------------------------------------------------------------


def load_summaries(path: str | Path) -> dict[str, str]:
    table = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            url, summary = rec["url"], rec["summary"]
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from None
        if not summary:
            raise ConfigError(f"{path}:{lineno}: empty summary for {url}")
        table[url] = summary
    return table


@dataclass(frozen=True)
class PostedComment:
    path: str
    line_range: tuple[LineCol, LineCol]
    url: str
    summary: str
    score: float
    origin_offset: int

    @property
    def line(self) -> int:
        return self.line_range[0].line

    def to_record(self) -> dict:
        start, end = self.line_range
        return {
            "path": self.path,
            "line_range": {"start": {"line": start.line, "col": start.col},
                           "end": {"line": end.line, "col": end.col}},
            "url": self.url,
            "summary": self.summary,
            "score": self.score,
            "origin_offset": self.origin_offset,
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "PostedComment":
        lr = rec["line_range"]
        return cls(
            path=rec["path"],
            line_range=(LineCol(lr["start"]["line"], lr["start"]["col"]),
                        LineCol(lr["end"]["line"], lr["end"]["col"])),
            url=rec["url"],
            summary=rec["summary"],
            score=float(rec["score"]),
            origin_offset=int(rec["origin_offset"]),
        )


@dataclass
class StageStats:
    """Per-stage counts for one or more analyzed files."""

    raw: int = 0
    after_thresholds: int = 0
    after_changed_lines: int = 0
    after_suppression: int = 0
    posted: int = 0
    missing_summaries: int = 0
    suppressed: list[Suppressed] = field(default_factory=list)

    def merge(self, other: "StageStats") -> None:
        self.raw += other.raw
        self.after_thresholds += other.after_thresholds
        self.after_changed_lines += other.after_changed_lines
        self.after_suppression += other.after_suppression
        self.posted += other.posted
        self.missing_summaries += other.missing_summaries
        self.suppressed.extend(other.suppressed)

    def to_record(self) -> dict:
        return {
            "raw": self.raw,
            "after_thresholds": self.after_thresholds,
            "after_changed_lines": self.after_changed_lines,
            "after_suppression": self.after_suppression,
            "posted": self.posted,
            "missing_summaries": self.missing_summaries,
            "suppressed": [
                {"offset": s.prediction.offset, "url": s.prediction.url, "reason": s.reason}
                for s in self.suppressed
            ],
        }


def render_comments(
    preds: Iterable[ViolationPrediction],
    source: bytes,
    path: str,
    summaries: Mapping[str, str],
    stats: StageStats | None = None,
) -> list[PostedComment]:
    out = []
    for p in preds:
        start, end = line_bounds(source, p.offset)
        line = anchor_offset(source, p.offset).line
        summary = summaries.get(p.url)
        if not summary:
            summary = PLACEHOLDER_SUMMARY
            if stats is not None:
                stats.missing_summaries += 1
            log.info("no summary for %s", p.url)
        # end column is one past the last byte of the line
        out.append(PostedComment(
            path=path,
            line_range=(LineCol(line, 1), LineCol(line, end - start + 1)),
            url=p.url,
            summary=summary,
            score=p.score,
            origin_offset=p.offset,
        ))
    out.sort(key=lambda c: (c.line, c.origin_offset, c.url))
    return out


# --- composition -----------------------------------------------------------


@dataclass(frozen=True)
class AnalysisConfig:
    backend: Backend = field(default_factory=ReferenceBackend)
    prompt_table: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_PROMPTS))
    budget: int = DEFAULT_BUDGET
    decode: DecodeConfig = DecodeConfig(GREEDY)
    thresholds: ThresholdTable = ThresholdTable()
    rules: tuple[SuppressionRule, ...] = ()
    summaries: Mapping[str, str] = field(default_factory=dict)

    def with_strategy(self, strategy: str | None, beam_width: int | None = None) -> "AnalysisConfig":
        if strategy is None and beam_width is None:
            return self
        decode = DecodeConfig(strategy or self.decode.strategy, beam_width or self.decode.beam_width)
        return replace(self, decode=decode)


def predict(snapshot: FileSnapshot, cfg: AnalysisConfig) -> list[ViolationPrediction]:
    """Model input -> backend -> merged predictions (no filtering)."""
    text = build_model_input(snapshot, cfg.prompt_table, cfg.budget)
    preds = merge_candidates(cfg.backend.analyze_raw(text, cfg.decode))
    return [p for p in preds if p.offset <= len(snapshot.content)]


def analyze_snapshot(
    snapshot: FileSnapshot,
    diff_text: str | None,
    cfg: AnalysisConfig,
    stats: StageStats | None = None,
    changed: ChangedLineSet | None = None,
) -> list[PostedComment]:
    """Run one file through backend and every filter stage.

    ``changed`` may be passed instead of ``diff_text`` to skip re-parsing a
    diff shared by many files.
    """
    st = StageStats()
    source = snapshot.content
    preds = predict(snapshot, cfg)
    st.raw = len(preds)
    preds = apply_thresholds(preds, cfg.thresholds)
    st.after_thresholds = len(preds)
    if changed is None and diff_text is not None:
        changed = changed_lines_from_diff(diff_text)
    if changed is not None:
        preds = filter_changed_lines(preds, source, changed, snapshot.path)
    st.after_changed_lines = len(preds)
    preds, suppressed = apply_suppressions(preds, source, snapshot.path, cfg.rules)
    st.after_suppression = len(preds)
    st.suppressed = suppressed
    comments = render_comments(preds, source, snapshot.path, cfg.summaries, st)
    st.posted = len(comments)
    if stats is not None:
        stats.merge(st)
    return comments


REVIEW_STRATEGY = BEAM
IDE_STRATEGY = GREEDY
