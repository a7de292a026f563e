"""
From review comments to training examples
=========================================

Human review comments that link to a best-practice page become
(input, target) pairs; comments without such a link are dropped.
"""
from bpreview.corpus import (
    FileSnapshot,
    ReviewComment,
    SkipReport,
    curate,
    extract_relevant_comments,
    temporal_split,
)

source = b"package p\n\n// does things\nfunc Do() {}\n"
archive = [FileSnapshot(f"r{i}", 1, "p/do.go", "go", source, created_at=i) for i in range(10)]
func_at = source.index(b"func")
for i in range(10):
    text = "please see https://go.dev/doc/comment#func" if i % 3 else "nice work"
    archive.append(ReviewComment(f"c{i}", f"r{i}", 1, "p/do.go", func_at, func_at + 4, text, "human", 100 + i))

# keep only comments citing an allowlisted URL
report = SkipReport()
relevant = list(extract_relevant_comments(archive, ["https://go.dev/"], report))
print(len(relevant), "relevant comments out of 10")

examples = list(curate(relevant, report=report))
first = examples[0]
print(first.input.splitlines()[0])  # the task prompt line
print(first.target)

# split by comment time: train < 104 <= validation < 107 <= test
split = temporal_split(examples, 104, 107)
print(len(split.train), len(split.validation), len(split.test))
