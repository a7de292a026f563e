"""
Choosing confidence thresholds
==============================

On a validation set with known answers, precision and recall are traced over
a threshold grid and a per-URL threshold is fitted to a target precision.
"""
import random

from bpreview.backend import ViolationPrediction
from bpreview.calibration import CalibrationConfig, EvalCase, fit_per_url_thresholds, format_curve, pr_curve

rng = random.Random(0)
cases = []
for i in range(300):
    url = rng.choice(["https://go.dev/doc/comment#func", "https://go.dev/wiki/Errors", "https://go.dev/x/stale"])
    score = rng.random()
    # stale advice is never right; the others are right more often when confident
    correct = url != "https://go.dev/x/stale" and rng.random() < score
    expected = frozenset({(0, url)}) if correct else frozenset()
    cases.append(EvalCase(f"e{i}", expected, (ViolationPrediction(0, url, round(score, 3)),)))

curve = pr_curve(cases)
print(format_curve(curve[::10]))

table, report = fit_per_url_thresholds(cases, CalibrationConfig(target_precision=0.9))
print(table.dumps())
print("suppress:", report.suppress)
