"""
The target language
===================

Model outputs are short strings of ``INSERT <offset> COMMENT <url>`` clauses.
This script writes a few, reads them back and anchors an offset in a file.
"""
from bpreview.target_dsl import anchor_offset, canonicalize, parse_target, serialize_target

source = (
    b"// Package addition provides Add\n"
    b"package addition\n"
    b"\n"
    b"// Return a sum\n"
    b"func Add(value1, value2 int) int {\n"
    b"\treturn value1 + value2\n"
    b"}\n"
)

# the byte offset of the func line, counted by hand
offset = source.index(b"func Add")
text = serialize_target([(offset, "https://go.dev/doc/comment#func")])
print(text)

# parsing gives the same pairs back
print(parse_target(text))

# nothing to report serializes as EMPTY
print(serialize_target([]), parse_target("EMPTY"))

# duplicates are dropped, first occurrence wins
pairs = [(3, "https://go.dev/a"), (3, "https://go.dev/a"), (0, "https://go.dev/b")]
print(canonicalize(pairs))

# an offset maps to a 1-based line and column
print(anchor_offset(source, offset))

# malformed text raises with the failing position
try:
    parse_target("INSERT x COMMENT https://go.dev/")
except ValueError as exc:
    print("rejected:", exc)
