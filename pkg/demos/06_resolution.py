"""
Did the author fix it?
======================

Comments posted on a first snapshot are looked for again, at the mapped
line, on the merged snapshot.
"""
from dataclasses import replace

from bpreview.corpus import FileSnapshot
from bpreview.pipeline import AnalysisConfig, analyze_snapshot
from bpreview.replay import SnapshotPair, estimate_resolution

initial_src = b"package shapes\n\n// Compute the area.\nfunc Area(s int) int { return s * s }\n"
initial = FileSnapshot("r1", 1, "shapes/area.go", "go", initial_src)
cfg = AnalysisConfig()
posted = tuple(analyze_snapshot(initial, None, cfg))
print([(c.line, c.url) for c in posted])

fixed = replace(initial, snapshot_id=3, content=initial_src.replace(b"Compute", b"Area computes"))
shifted = replace(initial, snapshot_id=3, content=b"// Package shapes is small.\n" + initial_src)

report = estimate_resolution([SnapshotPair(initial, fixed, posted), SnapshotPair(initial, shifted, posted)], cfg)
for c in report.classifications:
    print(c.pair_index, "absent" if c.absent else "present", c.line, "->", c.mapped_line)
print(report.to_record())
