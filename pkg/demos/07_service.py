"""
The analysis service
====================

Start the HTTP service on a free port, analyze a file, then add a
suppression rule and watch it take effect on the next request.
"""
import json
import tempfile
import threading
import urllib.request
from pathlib import Path

from bpreview.config import load_config
from bpreview.replay import FeedbackLog
from bpreview.service import AnalysisService, make_server

workdir = Path(tempfile.mkdtemp())
rules = workdir / "rules.jsonl"
rules.write_text("")
service = AnalysisService(load_config(None, rules=str(rules)), FeedbackLog(workdir / "feedback.jsonl"))
server = make_server(service, port=0)
threading.Thread(target=server.serve_forever, daemon=True).start()
base = f"http://127.0.0.1:{server.server_address[1]}"


def call(path, body=None):
    data = None if body is None else json.dumps(body).encode()
    req = urllib.request.Request(base + path, data=data, headers={"Content-Type": "application/json"})
    with urllib.request.urlopen(req) as resp:
        return json.loads(resp.read())


print(call("/v1/health"))
go = "package p\n\n// Sum of two ints\nfunc Add(a, b int) int { return a + b }\n"
request = {"files": [{"path": "p/add.go", "language": "go", "content": go}]}
first = call("/v1/analyze", request)
print([c["url"] for c in first["comments"]])

# the author reacts to the comment
print(call("/v1/feedback", {"comment_id": first["comments"][0]["comment_id"], "kind": "please_fix"}))

# suppress the URL; no restart needed
rules.write_text(json.dumps({"url_pattern": "https://go.dev/doc/comment", "reason": "not enforced here"}) + "\n")
print(call("/v1/analyze", request)["stats"]["suppressed"])

server.shutdown()
