"""Encoding and decoding of model targets.

A target is zero or more ``INSERT <offset> COMMENT <url>`` clauses joined
by single spaces, or the literal ``EMPTY`` when the file has no findings::

    >>> parse_target("INSERT 67 COMMENT https://go.dev/doc/comment#func")
    [ViolationTarget(offset=67, url='https://go.dev/doc/comment#func')]
    >>> serialize_target([])
    'EMPTY'

Offsets are byte offsets into the original source file, never into the
prompt-prefixed model input.
"""
from __future__ import annotations

import re
from typing import Iterable, NamedTuple

EMPTY_TOKEN = "EMPTY"
INSERT_KEYWORD = "INSERT"
COMMENT_KEYWORD = "COMMENT"

_SCHEME = re.compile(r"[A-Za-z][A-Za-z0-9+.\-]*:")
_WHITESPACE = re.compile(r"\s")


class TargetParseError(ValueError):
    """Raised for malformed target strings; ``position`` is a byte offset."""

    def __init__(self, message: str, position: int) -> None:
        super().__init__(f"{message} (at byte {position})")
        self.position = position


class TargetValidationError(ValueError):
    pass


class ViolationTarget(NamedTuple):
    offset: int
    url: str


class LineCol(NamedTuple):
    line: int
    col: int


def is_absolute_url(url: str) -> bool:
    if not url or _WHITESPACE.search(url):
        return False
    m = _SCHEME.match(url)
    return m is not None and m.end() < len(url)


def validate_target(target: ViolationTarget, source: bytes | None = None) -> None:
    offset, url = target
    if isinstance(offset, bool) or not isinstance(offset, int) or offset < 0:
        raise TargetValidationError(f"offset must be a non-negative int, got {offset!r}")
    if not isinstance(url, str) or not is_absolute_url(url):
        raise TargetValidationError(f"invalid url {url!r}")
    if source is not None and offset > len(source):
        raise TargetValidationError(f"offset {offset} beyond source length {len(source)}")


def canonicalize(targets: Iterable[tuple[int, str]]) -> list[ViolationTarget]:
    """Drop repeated (offset, url) pairs, keeping the first occurrence."""
    seen: set[tuple[int, str]] = set()
    out: list[ViolationTarget] = []
    for offset, url in targets:
        key = (offset, url)
        if key in seen:
            continue
        seen.add(key)
        out.append(ViolationTarget(offset, url))
    return out


def _tokens(text: str) -> list[tuple[str, int]]:
    """Split on single spaces, returning (token, byte position) pairs."""
    out = []
    pos = 0
    for tok in text.split(" "):
        out.append((tok, pos))
        pos += len(tok.encode("utf-8")) + 1
    return out


def parse_target(text: str | bytes) -> list[ViolationTarget]:
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise TargetParseError("target is not valid UTF-8", exc.start) from None
    if text == "" or text == EMPTY_TOKEN:
        return []

    tokens = _tokens(text)
    pairs: list[tuple[int, str]] = []
    i = 0
    while i < len(tokens):
        tok, pos = tokens[i]
        if tok != INSERT_KEYWORD:
            raise TargetParseError(f"expected {INSERT_KEYWORD!r}, found {tok!r}", pos)
        if i + 1 >= len(tokens):
            raise TargetParseError("missing offset", pos + len(tok))
        num, num_pos = tokens[i + 1]
        if not num or not (num.isascii() and num.isdigit()):
            raise TargetParseError(f"offset must be decimal digits, found {num!r}", num_pos)
        if i + 2 >= len(tokens) or tokens[i + 2][0] != COMMENT_KEYWORD:
            where = tokens[i + 2][1] if i + 2 < len(tokens) else num_pos + len(num)
            raise TargetParseError(f"expected {COMMENT_KEYWORD!r}", where)
        if i + 3 >= len(tokens):
            raise TargetParseError("missing url", tokens[i + 2][1] + len(COMMENT_KEYWORD))
        url, url_pos = tokens[i + 3]
        if not url:
            raise TargetParseError("empty url", url_pos)
        if not is_absolute_url(url):
            raise TargetParseError(f"url is not absolute: {url!r}", url_pos)
        pairs.append((int(num), url))
        i += 4
    return canonicalize(pairs)


def serialize_target(targets: Iterable[tuple[int, str]]) -> str:
    clauses = []
    for target in canonicalize(targets):
        validate_target(target)
        clauses.append(f"{INSERT_KEYWORD} {target.offset} {COMMENT_KEYWORD} {target.url}")
    return " ".join(clauses) if clauses else EMPTY_TOKEN


def anchor_offset(source: bytes, offset: int) -> LineCol:
    """Map a byte offset to a 1-based (line, byte column) position.

    ``offset == len(source)`` is allowed and lands one past the last byte.
    """
    if offset < 0 or offset > len(source):
        raise IndexError(f"offset {offset} outside [0, {len(source)}]")
    line = source.count(b"\n", 0, offset) + 1
    line_start = source.rfind(b"\n", 0, offset) + 1
    return LineCol(line, offset - line_start + 1)


def line_bounds(source: bytes, offset: int) -> tuple[int, int]:
    """Byte range [start, end) of the line holding ``offset``, newline excluded."""
    start = source.rfind(b"\n", 0, offset) + 1
    end = source.find(b"\n", offset)
    return start, len(source) if end == -1 else end
