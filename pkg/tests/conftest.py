from __future__ import annotations

import pytest

from bpreview.corpus import FileSnapshot

# Source half of the Go input/target example (the task prompt line is added by
# build_model_input, not stored in the file).
GO_EXAMPLE = (
    b"// Package addition provides Add\n"
    b"package addition\n"
    b"\n"
    b"// Return a sum\n"
    b"func Add(value1, value2 int) int {\n"
    b"\treturn value1 + value2\n"
    b"}\n"
)
FUNC_URL = "https://go.dev/doc/comment#func"


def count_offset_of_func(source: bytes) -> int:
    """Independent byte count: sum the lengths of the lines before ``func Add``."""
    total = 0
    for line in source.split(b"\n"):
        if line.startswith(b"func Add"):
            return total
        total += len(line) + 1
    raise AssertionError("no func Add line")


@pytest.fixture
def go_snapshot() -> FileSnapshot:
    return FileSnapshot("rev1", 1, "addition/add.go", "go", GO_EXAMPLE, created_at=100)


# --- acceptance summary ----------------------------------------------------

ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_LINES] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
