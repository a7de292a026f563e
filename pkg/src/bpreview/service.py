"""HTTP analysis service.

Endpoints::

    POST /v1/analyze    AnalyzeRequest JSON  -> AnalyzeResponse JSON
    POST /v1/feedback   FeedbackEvent JSON   -> acknowledgment
    GET  /v1/health     config fingerprint and backend identity

The request handlers are plain functions (:func:`handle_analyze`,
:class:`AnalysisService`) so they can be exercised without a socket.
"""
from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from dataclasses import dataclass, field
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Mapping

from bpreview.backend import BEAM, GREEDY, TransportError
from bpreview.config import LoadedConfig
from bpreview.corpus import FileSnapshot, UnsupportedLanguage
from bpreview.pipeline import AnalysisConfig, DiffParseError, PostedComment, StageStats, analyze_snapshot, changed_lines_from_diff
from bpreview.replay import FeedbackEvent, FeedbackLog, record_feedback

log = logging.getLogger(__name__)


class RequestError(ValueError):
    """Client error; maps to a 4xx response."""

    status = HTTPStatus.BAD_REQUEST


class BackendFailure(RuntimeError):
    status = HTTPStatus.BAD_GATEWAY


@dataclass(frozen=True)
class FileInput:
    path: str
    language: str
    content: str


@dataclass(frozen=True)
class AnalyzeRequest:
    files: tuple[FileInput, ...]
    diff: str | None = None
    strategy_override: str | None = None

    @classmethod
    def from_record(cls, rec: Any) -> "AnalyzeRequest":
        if not isinstance(rec, Mapping):
            raise RequestError("request body must be a JSON object")
        files_raw = rec.get("files", [])
        if not isinstance(files_raw, list):
            raise RequestError("'files' must be a list")
        files = []
        seen = set()
        for f in files_raw:
            try:
                fi = FileInput(str(f["path"]), str(f["language"]), f["content"])
            except (KeyError, TypeError):
                raise RequestError("each file needs path, language and content") from None
            if not isinstance(fi.content, str):
                raise RequestError(f"content of {fi.path} must be a string")
            if fi.path in seen:
                raise RequestError(f"duplicate path {fi.path}")
            seen.add(fi.path)
            files.append(fi)
        diff = rec.get("diff")
        if diff is not None and not isinstance(diff, str):
            raise RequestError("'diff' must be a string")
        strategy = rec.get("strategy_override")
        if strategy not in (None, GREEDY, BEAM):
            raise RequestError(f"unknown strategy {strategy!r}")
        return cls(tuple(files), diff, strategy)


def comment_id(c: PostedComment) -> str:
    key = f"{c.path}\0{c.origin_offset}\0{c.url}".encode("utf-8")
    return hashlib.sha1(key).hexdigest()[:16]


@dataclass
class AnalyzeResponse:
    comments: list[PostedComment] = field(default_factory=list)
    stats: StageStats = field(default_factory=StageStats)
    errors: list[dict] = field(default_factory=list)
    elapsed_ms: float = 0.0

    def to_record(self) -> dict:
        comments = []
        for c in self.comments:
            rec = c.to_record()
            rec["comment_id"] = comment_id(c)
            comments.append(rec)
        return {
            "comments": comments,
            "stats": self.stats.to_record(),
            "errors": self.errors,
            "elapsed": self.elapsed_ms,
        }


def handle_analyze(req: AnalyzeRequest, cfg: AnalysisConfig) -> AnalyzeResponse:
    """Analyze each file; per-file backend failures are reported, not raised.

    Raises RequestError for unsupported languages or a malformed diff, and
    BackendFailure when every file failed in the backend.
    """
    start = time.perf_counter()
    for f in req.files:
        if f.language not in cfg.prompt_table:
            raise RequestError(str(UnsupportedLanguage(f.language)))
    cfg = cfg.with_strategy(req.strategy_override)
    changed = None
    if req.diff is not None:
        try:
            changed = changed_lines_from_diff(req.diff)
        except DiffParseError as exc:
            raise RequestError(f"malformed diff: {exc}") from None

    resp = AnalyzeResponse()
    for f in req.files:
        snap = FileSnapshot("request", 0, f.path, f.language, f.content.encode("utf-8"))
        try:
            resp.comments.extend(analyze_snapshot(snap, None, cfg, resp.stats, changed=changed))
        except TransportError as exc:
            resp.errors.append({"path": f.path, "error": str(exc), "backend": exc.backend})
    if req.files and len(resp.errors) == len(req.files):
        raise BackendFailure("; ".join(e["error"] for e in resp.errors))
    resp.comments.sort(key=lambda c: (c.path, c.line, c.origin_offset, c.url))
    resp.elapsed_ms = (time.perf_counter() - start) * 1000.0
    return resp


class AnalysisService:
    """Request dispatch over a loaded config, independent of transport."""

    def __init__(self, config: LoadedConfig, feedback_log: FeedbackLog | None = None) -> None:
        self.config = config
        self.feedback_log = feedback_log
        self._lock = threading.Lock()

    def swap_config(self, config: LoadedConfig) -> None:
        with self._lock:
            self.config = config

    def analyze(self, body: Any) -> tuple[int, dict]:
        cfg = self.config.current()
        try:
            resp = handle_analyze(AnalyzeRequest.from_record(body), cfg)
        except RequestError as exc:
            return exc.status, {"error": str(exc)}
        except BackendFailure as exc:
            return exc.status, {"error": str(exc)}
        return HTTPStatus.OK, resp.to_record()

    def feedback(self, body: Any) -> tuple[int, dict]:
        if self.feedback_log is None:
            return HTTPStatus.SERVICE_UNAVAILABLE, {"error": "feedback log not configured"}
        try:
            event = FeedbackEvent.from_record(body)
        except (ValueError, TypeError) as exc:
            return HTTPStatus.BAD_REQUEST, {"error": str(exc)}
        try:
            ack = record_feedback(event, self.feedback_log)
        except OSError as exc:
            return HTTPStatus.INTERNAL_SERVER_ERROR, {"error": f"feedback not stored: {exc}"}
        return HTTPStatus.OK, ack

    def health(self) -> tuple[int, dict]:
        cfg = self.config.current()
        return HTTPStatus.OK, {
            "status": "ok",
            "fingerprint": self.config.fingerprint(),
            "backend": cfg.backend.name,
            "strategy": cfg.decode.strategy,
        }


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    service: AnalysisService

    def log_message(self, format: str, *args) -> None:  # noqa: A002
        log.debug("%s " + format, self.address_string(), *args)

    def _send(self, status: int, payload: dict) -> None:
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _body(self) -> Any:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        return json.loads(raw or b"null")

    def do_GET(self) -> None:
        if self.path == "/v1/health":
            self._send(*self.service.health())
        else:
            self._send(HTTPStatus.NOT_FOUND, {"error": f"no route {self.path}"})

    def do_POST(self) -> None:
        routes = {"/v1/analyze": self.service.analyze, "/v1/feedback": self.service.feedback}
        handler = routes.get(self.path)
        if handler is None:
            self._send(HTTPStatus.NOT_FOUND, {"error": f"no route {self.path}"})
            return
        try:
            body = self._body()
        except ValueError as exc:
            self._send(HTTPStatus.BAD_REQUEST, {"error": f"invalid JSON: {exc}"})
            return
        try:
            self._send(*handler(body))
        except Exception as exc:  # noqa: BLE001
            log.exception("unhandled error on %s", self.path)
            self._send(HTTPStatus.INTERNAL_SERVER_ERROR, {"error": str(exc)})


def make_server(service: AnalysisService, host: str = "127.0.0.1", port: int = 8080) -> ThreadingHTTPServer:
    handler = type("Handler", (_Handler,), {"service": service})
    server = ThreadingHTTPServer((host, port), handler)
    server.daemon_threads = True
    return server
