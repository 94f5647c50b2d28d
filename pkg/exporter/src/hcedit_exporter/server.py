"""HTTP provider endpoint.

Serves POST /logprobs with body {"text": str, "context": str|null},
returning {"model_id": str, "tokens": [...], "logprobs": [...]}. The
contract is stateless, so workers can be scaled horizontally; each
worker handles one request at a time.
"""

from __future__ import annotations

import json
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


class LogprobHandler(BaseHTTPRequestHandler):
    server_version = "hcedit-exporter/0.1"

    def log_message(self, fmt, *args):
        pass  # request logging stays out of stdout; reports go there

    def do_POST(self):
        if self.path != "/logprobs":
            self._reply(404, {"error": f"unknown path {self.path}"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            body = json.loads(self.rfile.read(length))
        except (ValueError, json.JSONDecodeError):
            self._reply(400, {"error": "request body is not valid JSON"})
            return
        text = body.get("text")
        context = body.get("context")
        if not isinstance(text, str) or not text.strip():
            self._reply(400, {"error": "field 'text' must be a non-empty string"})
            return
        if context is not None and not isinstance(context, str):
            self._reply(400, {"error": "field 'context' must be a string or null"})
            return
        model = self.server.model
        try:
            tokens, logprobs = model.score(text, context)
        except ValueError as exc:
            self._reply(400, {"error": str(exc)})
            return
        self._reply(
            200,
            {"model_id": model.model_id, "tokens": tokens, "logprobs": logprobs},
        )

    def _reply(self, status: int, obj: dict):
        payload = json.dumps(obj, ensure_ascii=False).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)


def make_server(model, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """Bound but not yet serving; port 0 picks a free port."""
    httpd = ThreadingHTTPServer((host, port), LogprobHandler)
    httpd.model = model
    return httpd


def serve(model, host: str, port: int) -> None:
    httpd = make_server(model, host, port)
    actual_port = httpd.server_address[1]
    print(f"serving {model.model_id} on http://{host}:{actual_port}/logprobs")
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()
