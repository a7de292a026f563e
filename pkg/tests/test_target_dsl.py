from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bpreview.target_dsl import (
    LineCol,
    TargetParseError,
    TargetValidationError,
    ViolationTarget,
    anchor_offset,
    parse_target,
    serialize_target,
)
from conftest import FUNC_URL, GO_EXAMPLE, count_offset_of_func

url_chars = st.text(
    alphabet=st.characters(blacklist_categories=("Zs", "Zl", "Zp", "Cc", "Cs")),
    min_size=1,
    max_size=20,
).filter(lambda s: not any(ch.isspace() for ch in s))
urls = st.builds(lambda scheme, rest: f"{scheme}://{rest}",
                 st.sampled_from(["https", "http", "u", "git+ssh"]), url_chars)
target_lists = st.lists(st.tuples(st.integers(0, 10**9), urls), max_size=6).map(
    lambda xs: list(dict.fromkeys(xs))
)


def test_go_example_target_listing():
    assert parse_target("INSERT 153 COMMENT https://go.dev/doc/comment#func") == [(153, FUNC_URL)]
    assert serialize_target([(153, FUNC_URL)]) == "INSERT 153 COMMENT https://go.dev/doc/comment#func"


def test_empty_target():
    assert parse_target("EMPTY") == []
    assert parse_target("") == []
    assert serialize_target([]) == "EMPTY"


def test_concatenated_clauses():
    assert parse_target("INSERT 10 COMMENT u://a INSERT 20 COMMENT u://b") == [(10, "u://a"), (20, "u://b")]


def test_duplicates_dropped_keeping_first():
    got = parse_target("INSERT 1 COMMENT u://a INSERT 2 COMMENT u://b INSERT 1 COMMENT u://a")
    assert got == [(1, "u://a"), (2, "u://b")]
    assert serialize_target([(1, "u://a"), (1, "u://a")]) == "INSERT 1 COMMENT u://a"


@pytest.mark.parametrize(
    "text, position",
    [
        ("INSERT", 6),
        ("INSERT x COMMENT u://a", 7),
        ("INSERT +5 COMMENT u://a", 7),
        ("INSERT -5 COMMENT u://a", 7),
        ("INSERT 5 NOTE u://a", 9),
        ("INSERT 5 COMMENT", 16),
        ("INSERT 5 COMMENT ", 17),
        ("INSERT 5 COMMENT u://a  INSERT 6 COMMENT u://b", 23),
        ("DELETE 5 COMMENT u://a", 0),
        ("INSERT 5 COMMENT not-a-url", 17),
        ("EMPTY INSERT 5 COMMENT u://a", 0),
    ],
)
def test_parse_errors_report_position(text, position):
    with pytest.raises(TargetParseError) as info:
        parse_target(text)
    assert info.value.position == position


def test_serialize_rejects_whitespace_url():
    with pytest.raises(TargetValidationError):
        serialize_target([(1, "https://a b")])
    with pytest.raises(TargetValidationError):
        serialize_target([(-1, "https://a")])


@settings(max_examples=300)
@given(target_lists)
def test_roundtrip_parse_serialize(xs):
    assert parse_target(serialize_target(xs)) == xs


@settings(max_examples=300)
@given(target_lists)
def test_serialize_of_parse_is_canonical(xs):
    s = serialize_target(xs)
    assert serialize_target(parse_target(s)) == s


@settings(max_examples=300)
@given(st.binary(max_size=80))
def test_parse_arbitrary_bytes_never_crashes(data):
    try:
        result = parse_target(data)
    except TargetParseError:
        return
    assert all(isinstance(t, ViolationTarget) for t in result)


def test_anchor_basics():
    assert anchor_offset(b"anything", 0) == LineCol(1, 1)
    assert anchor_offset(b"ab\ncd", 3) == LineCol(2, 1)
    assert anchor_offset(b"ab\ncd", 5) == LineCol(2, 3)
    assert anchor_offset(b"ab\n", 3) == LineCol(2, 1)
    with pytest.raises(IndexError):
        anchor_offset(b"ab", 3)


def test_anchor_go_example_matches_byte_count():
    offset = count_offset_of_func(GO_EXAMPLE)
    assert offset == 67
    assert anchor_offset(GO_EXAMPLE, offset) == LineCol(5, 1)
    assert GO_EXAMPLE.splitlines()[4].startswith(b"func Add")


@given(st.binary(max_size=200), st.data())
def test_anchor_monotone(source, data):
    a = data.draw(st.integers(0, len(source)))
    b = data.draw(st.integers(0, len(source)))
    lo, hi = min(a, b), max(a, b)
    assert tuple(anchor_offset(source, lo)) <= tuple(anchor_offset(source, hi))
