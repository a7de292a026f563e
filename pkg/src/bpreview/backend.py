"""Model backends and candidate merging.

A backend maps a model input (prompt line + source) to scored candidate
targets.  :class:`ReferenceBackend` is a deterministic rule engine that
stands in for a trained model; :class:`RemoteBackend` speaks the JSON
``POST /v1/generate`` protocol to an external model server.
"""
from __future__ import annotations

import json
import logging
import re
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Protocol, Sequence

from bpreview.corpus import split_model_input
from bpreview.target_dsl import TargetParseError, parse_target, serialize_target

log = logging.getLogger(__name__)

GREEDY = "greedy"
BEAM = "beam"


class TransportError(RuntimeError):
    """Backend unreachable or returned something we cannot use."""

    def __init__(self, backend: str, message: str) -> None:
        super().__init__(f"[{backend}] {message}")
        self.backend = backend


@dataclass(frozen=True)
class DecodeConfig:
    strategy: str = GREEDY
    beam_width: int = 4

    def __post_init__(self) -> None:
        if self.strategy not in (GREEDY, BEAM):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")

    @property
    def width(self) -> int:
        return 1 if self.strategy == GREEDY else self.beam_width


@dataclass(frozen=True)
class Candidate:
    target_text: str
    score: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")


class ViolationPrediction(NamedTuple):
    offset: int
    url: str
    score: float


class Backend(Protocol):
    name: str

    def analyze_raw(self, input: str, config: DecodeConfig) -> list[Candidate]: ...


def merge_candidates(cands: Iterable[Candidate]) -> list[ViolationPrediction]:
    """Union all pairs over candidates; a repeated pair keeps its best score."""
    best: dict[tuple[int, str], float] = {}
    for cand in cands:
        for offset, url in parse_target(cand.target_text):
            key = (offset, url)
            if key not in best or cand.score > best[key]:
                best[key] = cand.score
    return [ViolationPrediction(o, u, s) for (o, u), s in sorted(best.items())]


# --- reference rule backend ------------------------------------------------


class Finding(NamedTuple):
    offset: int
    url: str
    score: float


@dataclass(frozen=True)
class Rule:
    name: str
    url: str
    score: float
    check: Callable[[bytes, bytes, "Rule"], list[int]]
    params: tuple = ()


def _comment_blocks(source: bytes, prefix: bytes) -> list[tuple[list[tuple[int, bytes]], int | None]]:
    """Contiguous full-line comment blocks.

    Each entry is ``(lines, next_line_start)`` where ``lines`` holds
    (start offset, stripped text) and ``next_line_start`` is the offset of
    the line right after the block, or None at end of file.
    """
    blocks = []
    current: list[tuple[int, bytes]] = []
    pos = 0
    for raw in source.splitlines(keepends=True):
        stripped = raw.strip()
        if stripped.startswith(prefix):
            current.append((pos + raw.index(prefix[:1]), stripped))
        elif current:
            blocks.append((current, pos))
            current = []
        pos += len(raw)
    if current:
        blocks.append((current, None))
    return blocks


_GO_FUNC = re.compile(rb"^func\s+(?:\([^)]*\)\s*)?([A-Za-z_]\w*)", re.MULTILINE)


def check_go_func_doc(source: bytes, prefix: bytes, rule: Rule) -> list[int]:
    """Exported Go func whose doc comment does not open with its name."""
    hits = []
    for m in _GO_FUNC.finditer(source):
        name = m.group(1)
        if not name[:1].isupper():
            continue
        doc_first = _doc_comment_first_line(source, m.start())
        if doc_first is None:
            continue
        words = doc_first[2:].split()
        first = words[0] if words else b""
        if first in (b"Deprecated:",):
            continue
        if first != name:
            hits.append(m.start())
    return hits


def _doc_comment_first_line(source: bytes, decl_start: int) -> bytes | None:
    lines = source[:decl_start].splitlines()
    doc: list[bytes] = []
    for line in reversed(lines):
        s = line.strip()
        if s.startswith(b"//"):
            doc.append(s)
        else:
            break
    return doc[-1] if doc else None


def check_comment_period(source: bytes, prefix: bytes, rule: Rule) -> list[int]:
    """Doc comment blocks (directly above code) whose last sentence lacks a period."""
    hits = []
    for lines, nxt in _comment_blocks(source, prefix):
        if nxt is None:
            continue
        following = source[nxt:].split(b"\n", 1)[0]
        if not following.strip():
            continue
        start, text = lines[-1]
        body = text[len(prefix):].strip()
        if body and body[-1:] not in b".!?:":
            hits.append(start)
    return hits


def check_line_length(source: bytes, prefix: bytes, rule: Rule) -> list[int]:
    limit = rule.params[0] if rule.params else 100
    hits = []
    pos = 0
    for raw in source.splitlines(keepends=True):
        if len(raw.rstrip(b"\r\n")) > limit:
            hits.append(pos)
        pos += len(raw)
    return hits


FUNC_DOC_URL = "https://go.dev/doc/comment#func"
COMMENT_SENTENCE_URL = "https://go.dev/wiki/CodeReviewComments#comment-sentences"
LINE_LENGTH_URL = "https://go.dev/wiki/CodeReviewComments#line-length"


def default_rules(
    func_doc_score: float = 0.99,
    period_score: float = 0.85,
    line_length_score: float = 0.70,
    period_url: str = COMMENT_SENTENCE_URL,
    line_length_url: str = LINE_LENGTH_URL,
    max_line_length: int = 100,
) -> tuple[Rule, ...]:
    return (
        Rule("go-func-doc", FUNC_DOC_URL, func_doc_score, check_go_func_doc),
        Rule("comment-period", period_url, period_score, check_comment_period),
        Rule("line-length", line_length_url, line_length_score, check_line_length,
             (max_line_length,)),
    )


@dataclass(frozen=True)
class ReferenceBackend:
    """Rule-based stand-in for a trained model.

    Beam decoding is emulated: with findings sorted best-first, the k-th
    hypothesis drops the k-1 weakest findings and scores as its weakest
    remaining finding.  Hypotheses are returned best-first, so greedy
    decoding yields only the top score stratum and wider beams add the
    lower-confidence findings.
    """

    rules: tuple[Rule, ...] = field(default_factory=default_rules)
    name: str = "reference"

    def findings(self, input: str) -> list[Finding]:
        prompt, source = split_model_input(input)
        prefix = (prompt.split(" ", 1)[0] or "//").encode("utf-8")
        out = set()
        for rule in self.rules:
            for offset in rule.check(source, prefix, rule):
                out.add(Finding(offset, rule.url, rule.score))
        return sorted(out, key=lambda f: (-f.score, f.offset, f.url))

    def analyze_raw(self, input: str, config: DecodeConfig = DecodeConfig()) -> list[Candidate]:
        if not input:
            raise ValueError("empty model input")
        found = self.findings(input)
        if not found:
            return [Candidate("EMPTY", 1.0)]
        m = len(found)
        # hypothesis k keeps found[:m-k+1]; rank by (score desc, size desc)
        sizes = sorted(range(1, m + 1), key=lambda n: (-found[n - 1].score, -n))
        return [
            Candidate(serialize_target((f.offset, f.url) for f in found[:n]), found[n - 1].score)
            for n in sizes[: config.width]
        ]


# --- remote backend --------------------------------------------------------


@dataclass
class RemoteBackend:
    """Client for ``POST {base_url}/v1/generate``."""

    base_url: str
    timeout: float = 10.0
    retries: int = 2
    backoff: float = 0.2
    dropped: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def name(self) -> str:
        return f"remote:{self.base_url}"

    def _post(self, body: bytes) -> bytes:
        req = urllib.request.Request(
            self.base_url.rstrip("/") + "/v1/generate",
            data=body,
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            return resp.read()

    def analyze_raw(self, input: str, config: DecodeConfig = DecodeConfig()) -> list[Candidate]:
        if not input:
            raise ValueError("empty model input")
        body = json.dumps(
            {"input": input, "strategy": config.strategy, "beam_width": config.width}
        ).encode("utf-8")
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                raw = self._post(body)
                break
            except (urllib.error.URLError, OSError) as exc:
                last = exc
                log.warning("%s attempt %d failed: %s", self.name, attempt + 1, exc)
                if attempt < self.retries:
                    time.sleep(self.backoff * (2 ** attempt))
        else:
            raise TransportError(self.name, f"request failed: {last}")
        return self._decode(raw, config)

    def _decode(self, raw: bytes, config: DecodeConfig) -> list[Candidate]:
        try:
            items = json.loads(raw)["candidates"]
            if not isinstance(items, list):
                raise TypeError("candidates is not a list")
        except (ValueError, KeyError, TypeError) as exc:
            raise TransportError(self.name, f"malformed response: {exc}") from None
        out = []
        dropped = 0
        for item in items:
            try:
                cand = Candidate(str(item["target"]), float(item["score"]))
                parse_target(cand.target_text)
            except (TargetParseError, ValueError, KeyError, TypeError):
                dropped += 1
                continue
            out.append(cand)
        if dropped:
            with self._lock:
                self.dropped += dropped
        if not out:
            raise TransportError(self.name, "no parseable candidates in response")
        return out[: config.width]


def make_backend(spec: str, **kwargs) -> Backend:
    """``reference`` or ``remote:<base url>``."""
    if spec == "reference":
        return ReferenceBackend()
    if spec.startswith("remote:"):
        return RemoteBackend(spec[len("remote:"):], **kwargs)
    raise ValueError(f"unknown backend {spec!r}")


def candidates_from_pairs(preds: Sequence[ViolationPrediction]) -> list[Candidate]:
    return [Candidate(serialize_target([(p.offset, p.url)]), p.score) for p in preds]
