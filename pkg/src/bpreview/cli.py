"""Command-line entry point: ``bpreview <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Sequence, TextIO

from bpreview.backend import BEAM, GREEDY
from bpreview.calibration import (
    CalibrationConfig,
    EvalCase,
    fit_per_url_thresholds,
    format_curve,
    pr_curve,
)
from bpreview.config import load_config
from bpreview.corpus import (
    FileSnapshot,
    SkipReport,
    TrainingExample,
    curate,
    extract_relevant_comments,
    language_for_path,
    read_archive,
    read_jsonl,
    snapshot_from_record,
    temporal_split,
    write_jsonl,
)
from bpreview.pipeline import PostedComment, StageStats, analyze_snapshot, predict
from bpreview.replay import (
    FeedbackLog,
    JsonlLog,
    SnapshotPair,
    estimate_resolution,
    histogram_from_results,
    human_coverage,
    replay_reviews,
    url_distribution,
    useful_ratio,
)
from bpreview.target_dsl import parse_target

log = logging.getLogger("bpreview")


class CliError(Exception):
    pass


@contextmanager
def _output(path: str | None) -> Iterator[TextIO]:
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8") as fh:
            yield fh


def _config(args: argparse.Namespace, default_strategy: str = GREEDY):
    return load_config(
        args.config,
        backend=args.backend,
        strategy=args.strategy or default_strategy,
        beam_width=args.beam_width,
        thresholds=args.thresholds,
        rules=args.rules,
        summaries=args.summaries,
    )


def _fmt(x: float | None) -> str:
    return "undefined" if x is None else f"{x:.4f}"


# --- subcommands -----------------------------------------------------------


def cmd_curate(args: argparse.Namespace) -> int:
    loaded = _config(args)
    allowlist = loaded.allowlist
    if args.allowlist:
        allowlist = tuple(ln.strip() for ln in Path(args.allowlist).read_text().splitlines() if ln.strip())
    report = SkipReport()
    with open(args.archive, encoding="utf-8") as fh:
        records = list(read_archive(fh, report))
    relevant = extract_relevant_comments(records, allowlist, report)
    examples = curate(relevant, loaded.analysis.prompt_table, args.budget, report)
    with _output(args.out) as out:
        n = write_jsonl((ex.to_record() for ex in examples), out)
    print(f"curated {n} examples; skipped {report.total} {dict(report.counts)}", file=sys.stderr)
    return 0


def cmd_split(args: argparse.Namespace) -> int:
    examples = [TrainingExample.from_record(r) for r in read_jsonl(args.examples)]
    split = temporal_split(examples, args.cut1, args.cut2)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in ("train", "validation", "test"):
        part = getattr(split, name)
        with open(out_dir / f"{name}.jsonl", "w", encoding="utf-8") as fh:
            write_jsonl((ex.to_record() for ex in part), fh)
        print(f"{name}: {len(part)}")
    return 0


def _cases_from_examples(path: str, loaded) -> list[EvalCase]:
    cfg = loaded.analysis
    cases = []
    for rec in read_jsonl(path):
        ex = TrainingExample.from_record(rec)
        prompt, _, body = ex.input.partition("\n")
        snap = FileSnapshot(ex.review_id, 0, ex.example_id, ex.language, body.encode("utf-8"))
        preds = predict(snap, cfg)
        cases.append(EvalCase(ex.example_id, frozenset(parse_target(ex.target)), tuple(preds)))
    return cases


def cmd_calibrate(args: argparse.Namespace) -> int:
    loaded = _config(args)
    if args.cases:
        cases = [EvalCase.from_record(r) for r in read_jsonl(args.cases)]
    elif args.examples:
        cases = _cases_from_examples(args.examples, loaded)
    else:
        raise CliError("calibrate needs --cases or --examples")
    if not cases:
        raise CliError("no evaluation cases")
    cfg = CalibrationConfig(args.target_precision, args.min_support)
    table, report = fit_per_url_thresholds(cases, cfg, tolerance=args.tolerance)
    with _output(args.out) as out:
        out.write(table.dumps())
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            write_jsonl(report.to_records(), fh)
    stream = sys.stderr if args.out in (None, "-") else sys.stdout
    print(format_curve(pr_curve(cases, cfg.threshold_grid, args.tolerance)), file=stream)
    print(f"default t = {report.default_t}; per-url = {len(table.per_url)}; "
          f"suppress = {report.suppress}", file=stream)
    return 0


def _print_comments(comments: Sequence[PostedComment], out: TextIO, as_json: bool) -> None:
    for c in comments:
        if as_json:
            out.write(json.dumps(c.to_record()) + "\n")
        else:
            out.write(f"{c.path}:{c.line}: {c.url} ({c.score:.2f}) {c.summary}\n")


def cmd_analyze(args: argparse.Namespace) -> int:
    loaded = _config(args)
    cfg = loaded.current()
    diff = Path(args.diff).read_text(encoding="utf-8") if args.diff else None
    stats = StageStats()
    comments: list[PostedComment] = []
    for f in args.file:
        language = args.language or language_for_path(f)
        if language is None:
            raise CliError(f"cannot infer language of {f}; pass --language")
        if language not in cfg.prompt_table:
            raise CliError(f"unsupported language: {language}")
        snap = FileSnapshot("cli", 0, f, language, Path(f).read_bytes())
        comments.extend(analyze_snapshot(snap, diff, cfg, stats))
    with _output(args.out) as out:
        _print_comments(comments, out, args.json)
    print(f"{len(comments)} comment(s); suppressed {len(stats.suppressed)}", file=sys.stderr)
    return 0


def read_corpus(path: str) -> list[tuple[FileSnapshot, str | None]]:
    """Snapshot records plus optional ``{"kind": "diff", "review_id", "diff"}`` records."""
    snaps: list[FileSnapshot] = []
    diffs: dict[str, str] = {}
    for rec in read_jsonl(path):
        if rec.get("kind") == "diff":
            diffs[str(rec["review_id"])] = diffs.get(str(rec["review_id"]), "") + rec["diff"]
        else:
            snaps.append(snapshot_from_record(rec))
    return [(s, diffs.get(s.review_id)) for s in snaps]


def cmd_replay(args: argparse.Namespace) -> int:
    loaded = _config(args, default_strategy=BEAM)
    results = JsonlLog(args.results_log) if args.results_log else None
    report = replay_reviews(read_corpus(args.corpus), loaded.current(), results)
    rec = report.to_record()
    with _output(args.out) as out:
        out.write(json.dumps(rec, sort_keys=True) + "\n")
    if args.out not in (None, "-"):
        print(f"files: {report.files_total} total, {report.files_changed} changed, "
              f"{report.files_with_comments} with comments "
              f"(frequency {_fmt(report.file_posting_frequency)})")
        print(f"reviews: {report.reviews_total} total, {report.reviews_with_comments} with comments")
    return 0


def cmd_resolution(args: argparse.Namespace) -> int:
    loaded = _config(args, default_strategy=BEAM)
    cfg = loaded.current()
    pairs = []
    for rec in read_jsonl(args.pairs):
        initial = snapshot_from_record(rec["initial"])
        merged = snapshot_from_record(rec["merged"])
        if "comments" in rec:
            comments = tuple(PostedComment.from_record(c) for c in rec["comments"])
        else:
            comments = tuple(analyze_snapshot(initial, None, cfg))
        pairs.append(SnapshotPair(initial, merged, comments))
    report = estimate_resolution(pairs, cfg, args.confirmation_factor, args.anywhere)
    with _output(args.out) as out:
        out.write(json.dumps(report.to_record(), sort_keys=True) + "\n")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    if not (args.results or args.feedback):
        raise CliError("report needs --results and/or --feedback")
    lines: list[str] = []
    records: list[dict] = []
    if args.results:
        results = JsonlLog(args.results).records()
        rows = url_distribution(histogram_from_results(results))
        lines.append(f"{'rank':>4} {'count':>6} {'share':>7} {'cumulative':>10}  url")
        for r in rows:
            lines.append(f"{r.rank:>4} {r.count:>6} {r.share:>7.4f} {r.cumulative_share:>10.4f}  {r.url}")
            records.append({"kind": "distribution", **r._asdict()})
        if args.archive:
            loaded = _config(args)
            with open(args.archive, encoding="utf-8") as fh:
                human = list(extract_relevant_comments(read_archive(fh), loaded.allowlist))
            cov = human_coverage({r.url for r in rows}, human)
            lines.append(f"human coverage: {_fmt(cov)} of {len(human)} human comments")
            records.append({"kind": "coverage", "value": cov, "human_comments": len(human)})
    if args.feedback:
        ratio = useful_ratio(FeedbackLog(args.feedback).events())
        lines.append(f"useful ratio: {_fmt(ratio)}")
        records.append({"kind": "useful_ratio", "value": ratio})
    print("\n".join(lines))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            write_jsonl(records, fh)
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    from bpreview.service import AnalysisService, make_server

    loaded = _config(args)
    feedback = FeedbackLog(args.feedback_log) if args.feedback_log else None
    server = make_server(AnalysisService(loaded, feedback), args.host, args.port)
    host, port = server.server_address[:2]
    print(f"serving on http://{host}:{port} (backend {loaded.analysis.backend.name})", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


# --- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="DIR", help="config directory")
    common.add_argument("--backend", default="reference", help="reference | remote:URL")
    common.add_argument("--strategy", choices=(GREEDY, BEAM))
    common.add_argument("--beam-width", type=int, default=4)
    common.add_argument("--thresholds", metavar="FILE")
    common.add_argument("--rules", metavar="FILE")
    common.add_argument("--summaries", metavar="FILE")
    common.add_argument("--out", metavar="FILE")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="bpreview", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curate", parents=[common], help="archive -> training examples")
    p.add_argument("--archive", required=True)
    p.add_argument("--allowlist")
    p.add_argument("--budget", type=int, default=8192)
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("split", parents=[common], help="temporal split of examples")
    p.add_argument("--examples", required=True)
    p.add_argument("--cut1", type=int, required=True)
    p.add_argument("--cut2", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("calibrate", parents=[common], help="fit per-URL thresholds")
    p.add_argument("--cases")
    p.add_argument("--examples")
    p.add_argument("--target-precision", type=float, default=0.9)
    p.add_argument("--min-support", type=int, default=5)
    p.add_argument("--tolerance", type=int, default=0)
    p.add_argument("--report")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("analyze", parents=[common], help="analyze files")
    p.add_argument("--file", action="append", required=True)
    p.add_argument("--language")
    p.add_argument("--diff")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("replay", parents=[common], help="replay historical reviews")
    p.add_argument("--corpus", required=True)
    p.add_argument("--results-log")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("resolution", parents=[common], help="estimate comment resolution")
    p.add_argument("--pairs", required=True)
    p.add_argument("--confirmation-factor", type=float, default=1.0)
    p.add_argument("--anywhere", action="store_true")
    p.set_defaults(func=cmd_resolution)

    p = sub.add_parser("report", parents=[common], help="distributions, useful ratio, coverage")
    p.add_argument("--results")
    p.add_argument("--feedback")
    p.add_argument("--archive")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", parents=[common], help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--feedback-log")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def run_cli(argv: Sequence[str]) -> int:
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
