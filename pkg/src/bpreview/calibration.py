"""Precision/recall at a confidence threshold, and per-URL threshold fitting.

A prediction is kept at threshold ``t`` when its score is strictly greater
than ``t``.  Precision at ``t`` is correct-kept over kept; recall at ``t`` is
correct-kept over the number of expected (offset, url) pairs.  Either is
``None`` when its denominator is zero.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

from bpreview.backend import ViolationPrediction
from bpreview.pipeline import ThresholdTable

RECALL_DENOMINATOR_NOTE = "recall denominator: total expected (offset, url) pairs"
GROUND_TRUTH_CAVEAT = (
    "expected comments come from human reviews and are not exhaustive; "
    "'incorrect' predictions may still be valid findings"
)


def default_grid() -> list[float]:
    return [round(i / 100, 2) for i in range(101)]


@dataclass(frozen=True)
class EvalCase:
    example_id: str
    expected: frozenset[tuple[int, str]]
    predicted: tuple[ViolationPrediction, ...]

    @classmethod
    def from_record(cls, rec: Mapping) -> "EvalCase":
        return cls(
            example_id=str(rec["example_id"]),
            expected=frozenset((int(e["offset"]), e["url"]) for e in rec.get("expected", [])),
            predicted=tuple(
                ViolationPrediction(int(p["offset"]), p["url"], float(p["score"]))
                for p in rec.get("predicted", [])
            ),
        )

    def to_record(self) -> dict:
        return {
            "example_id": self.example_id,
            "expected": [{"offset": o, "url": u} for o, u in sorted(self.expected)],
            "predicted": [{"offset": p.offset, "url": p.url, "score": p.score}
                          for p in self.predicted],
        }


class PRPoint(NamedTuple):
    t: float
    precision: float | None
    recall: float | None
    kept_predictions: int
    correct_kept: int


@dataclass(frozen=True)
class CalibrationConfig:
    target_precision: float = 0.9
    min_support: int = 5
    threshold_grid: tuple[float, ...] = field(default_factory=lambda: tuple(default_grid()))

    def __post_init__(self) -> None:
        grid = list(self.threshold_grid)
        if grid != sorted(grid) or any(not 0.0 <= t <= 1.0 for t in grid):
            raise ValueError("threshold_grid must be ascending within [0, 1]")
        if self.min_support < 1:
            raise ValueError("min_support must be >= 1")


def _is_correct(pred: ViolationPrediction, expected: frozenset, tolerance: int) -> bool:
    if tolerance == 0:
        return (pred.offset, pred.url) in expected
    return any(u == pred.url and abs(o - pred.offset) <= tolerance for o, u in expected)


def _unique_pairs(preds: Iterable[ViolationPrediction]) -> list[ViolationPrediction]:
    best: dict[tuple[int, str], ViolationPrediction] = {}
    for p in preds:
        key = (p.offset, p.url)
        if key not in best or p.score > best[key].score:
            best[key] = p
    return list(best.values())


def score_case(
    case: EvalCase,
    t: float,
    table: ThresholdTable | None = None,
    tolerance: int = 0,
) -> tuple[int, int, int]:
    """(correct_kept, kept, expected_count) for one case."""
    kept = [
        p for p in _unique_pairs(case.predicted)
        if p.score > (table.threshold_for(p.url) if table is not None else t)
    ]
    correct = sum(_is_correct(p, case.expected, tolerance) for p in kept)
    return correct, len(kept), len(case.expected)


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def pr_curve(
    cases: Sequence[EvalCase], grid: Sequence[float] | None = None, tolerance: int = 0
) -> list[PRPoint]:
    grid = default_grid() if grid is None else list(grid)
    expected_total = sum(len(c.expected) for c in cases)
    scored: list[tuple[float, bool]] = []
    for case in cases:
        for p in _unique_pairs(case.predicted):
            scored.append((p.score, _is_correct(p, case.expected, tolerance)))
    points = []
    for t in grid:
        kept = [ok for s, ok in scored if s > t]
        correct = sum(kept)
        points.append(PRPoint(t, _ratio(correct, len(kept)), _ratio(correct, expected_total),
                              len(kept), correct))
    return points


@dataclass
class CalibrationReport:
    suppress: list[str] = field(default_factory=list)
    per_url: dict[str, dict] = field(default_factory=dict)
    default_t: float = 1.0
    notes: tuple[str, ...] = (RECALL_DENOMINATOR_NOTE, GROUND_TRUTH_CAVEAT)

    def to_records(self) -> list[dict]:
        recs = [{"kind": "note", "text": n} for n in self.notes]
        recs.append({"kind": "default", "t": self.default_t})
        for url, info in sorted(self.per_url.items()):
            recs.append({"kind": "url", "url": url, **info})
        return recs


def _precision_at(pairs: Sequence[tuple[float, bool]], t: float) -> float | None:
    kept = [ok for s, ok in pairs if s > t]
    return _ratio(sum(kept), len(kept))


def fit_per_url_thresholds(
    cases: Sequence[EvalCase], cfg: CalibrationConfig = CalibrationConfig(), tolerance: int = 0
) -> tuple[ThresholdTable, CalibrationReport]:
    if not cfg.threshold_grid:
        raise ValueError("threshold grid is empty")
    by_url: dict[str, list[tuple[float, bool]]] = defaultdict(list)
    everything: list[tuple[float, bool]] = []
    for case in cases:
        for p in _unique_pairs(case.predicted):
            item = (p.score, _is_correct(p, case.expected, tolerance))
            by_url[p.url].append(item)
            everything.append(item)

    def smallest_qualifying(pairs: Sequence[tuple[float, bool]]) -> float | None:
        for t in cfg.threshold_grid:
            prec = _precision_at(pairs, t)
            if prec is not None and prec >= cfg.target_precision:
                return t
        return None

    report = CalibrationReport()
    default_t = smallest_qualifying(everything)
    report.default_t = 1.0 if default_t is None else default_t
    per_url: dict[str, float] = {}
    for url in sorted(by_url):
        pairs = by_url[url]
        if len(pairs) < cfg.min_support:
            report.per_url[url] = {"support": len(pairs), "t": None, "status": "below min_support"}
            continue
        t = smallest_qualifying(pairs)
        if t is None:
            per_url[url] = 1.0
            report.suppress.append(url)
            report.per_url[url] = {"support": len(pairs), "t": 1.0, "status": "suppress"}
        else:
            per_url[url] = t
            report.per_url[url] = {"support": len(pairs), "t": t,
                                   "precision": _precision_at(pairs, t), "status": "fitted"}
    return ThresholdTable(report.default_t, per_url), report


@dataclass(frozen=True)
class RunSummary:
    label: str
    precision: float | None
    recall: float | None
    curve: list[PRPoint]


def compare_runs(
    runs: Sequence[tuple[str, Sequence[EvalCase]]],
    reference_t: float = 0.98,
    grid: Sequence[float] | None = None,
) -> list[RunSummary]:
    """Rank runs by precision at ``reference_t``, then recall, then label."""
    if not runs:
        raise ValueError("need at least one run")
    summaries = []
    for label, cases in runs:
        (at_ref,) = pr_curve(cases, [reference_t])
        summaries.append(RunSummary(label, at_ref.precision, at_ref.recall, pr_curve(cases, grid)))

    def key(s: RunSummary):
        p = -1.0 if s.precision is None else s.precision
        r = -1.0 if s.recall is None else s.recall
        return (-p, -r, s.label)

    return sorted(summaries, key=key)


def format_curve(points: Sequence[PRPoint]) -> str:
    def fmt(x: float | None) -> str:
        return "undef" if x is None else f"{x:.4f}"

    rows = [f"# {RECALL_DENOMINATOR_NOTE}", f"{'t':>6} {'precision':>10} {'recall':>8} {'kept':>6} {'correct':>8}"]
    for p in points:
        rows.append(f"{p.t:>6.2f} {fmt(p.precision):>10} {fmt(p.recall):>8} "
                    f"{p.kept_predictions:>6} {p.correct_kept:>8}")
    return "\n".join(rows)
