"""
Analyzing one file
==================

The reference backend predicts, then thresholds, changed-line filtering and
suppression rules decide what gets posted.
"""
from bpreview.backend import BEAM, DecodeConfig
from bpreview.config import DEFAULT_SUMMARIES
from bpreview.corpus import FileSnapshot
from bpreview.pipeline import AnalysisConfig, StageStats, SuppressionRule, ThresholdTable, analyze_snapshot, predict

source = (
    b"// Package addition provides Add\n"
    b"package addition\n"
    b"\n"
    b"// Return a sum\n"
    b"func Add(value1, value2 int) int {\n"
    b"\treturn value1 + value2\n"
    b"}\n"
)
snap = FileSnapshot("r1", 1, "addition/add.go", "go", source)

# greedy decoding and the default 0.98 threshold
cfg = AnalysisConfig(summaries=DEFAULT_SUMMARIES)
for c in analyze_snapshot(snap, None, cfg):
    print(c.line, c.url, "-", c.summary)

# a wide beam surfaces lower-confidence findings too
beam = AnalysisConfig(decode=DecodeConfig(BEAM, 8))
for p in predict(snap, beam):
    print(p)

# lowering one URL's threshold lets its findings through
relaxed = AnalysisConfig(decode=DecodeConfig(BEAM, 8),
                         thresholds=ThresholdTable(0.98, {"https://go.dev/wiki/CodeReviewComments#comment-sentences": 0.8}))
print([c.line for c in analyze_snapshot(snap, None, relaxed)])

# a diff that only touches line 6 hides comments elsewhere
diff = "--- a/addition/add.go\n+++ b/addition/add.go\n@@ -6 +6 @@\n-\treturn value2 + value1\n+\treturn value1 + value2\n"
print(analyze_snapshot(snap, diff, cfg))

# a suppression rule removes a URL and records why
stats = StageStats()
quiet = AnalysisConfig(rules=(SuppressionRule("https://go.dev/doc/comment", reason="team opted out"),))
print(analyze_snapshot(snap, None, quiet, stats), stats.suppressed)
