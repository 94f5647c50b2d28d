"""Shared fixtures: a deterministic fake scoring model, wire-format
builders, and a mock HTTP provider server."""

from __future__ import annotations

import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from hcedit.providers import TokenizedSentence, write_logprob_file

FAKE_MODEL_ID = "fake-lm-v1"


def fake_tokens(text: str) -> list[str]:
    return text.split()


def fake_logprob(token: str, context: str | None, position: int) -> float:
    """Deterministic pseudo-logprob in (-6.0, -0.05], stable across
    processes (hashlib, not the salted builtin hash)."""
    payload = f"{context or ''}\x00{token}\x00{position}".encode("utf-8")
    digest = hashlib.sha256(payload).digest()
    u = int.from_bytes(digest[:8], "big") / 2**64
    return -(0.05 + 5.95 * u)


def fake_score(text: str, context: str | None = None) -> tuple[list[str], list[float]]:
    tokens = fake_tokens(text)
    logprobs = [fake_logprob(tok, context, i) for i, tok in enumerate(tokens)]
    return tokens, logprobs


def scored_sentence(
    text: str,
    doc_id: str = "doc",
    sent_index: int = 0,
    context: str | None = None,
    context_id: str | None = None,
    model_id: str = FAKE_MODEL_ID,
) -> TokenizedSentence:
    tokens, logprobs = fake_score(text, context)
    return TokenizedSentence(
        doc_id=doc_id,
        sent_index=sent_index,
        tokens=tuple(tokens),
        logprobs=tuple(logprobs),
        context_id=context_id,
        model_id=model_id,
    )


def carrier_sentence(
    lppt_value: float,
    length: int,
    sent_index: int = 0,
    doc_id: str = "doc",
    model_id: str = FAKE_MODEL_ID,
    context_id: str | None = None,
) -> TokenizedSentence:
    """Synthetic sentence whose log-perplexity equals ``lppt_value``."""
    return TokenizedSentence(
        doc_id=doc_id,
        sent_index=sent_index,
        tokens=tuple(f"w{j}" for j in range(length)),
        logprobs=(-float(lppt_value),) * length,
        context_id=context_id,
        model_id=model_id,
    )


def write_wire_file(path, sentences) -> str:
    write_logprob_file(sentences, path)
    return str(path)


class _ProviderHandler(BaseHTTPRequestHandler):
    """Implements the POST /logprobs contract against the fake model."""

    server_version = "FakeLM/1.0"

    def log_message(self, *args):  # silence request logging in tests
        pass

    def do_POST(self):
        state = self.server.state
        state["requests"] += 1
        if self.path != "/logprobs":
            self._reply(404, {"error": "not found"})
            return
        state["headers"].append(dict(self.headers))
        if state["fail_next"] > 0:
            state["fail_next"] -= 1
            self._reply(500, {"error": "transient"})
            return
        length = int(self.headers.get("Content-Length", "0"))
        try:
            body = json.loads(self.rfile.read(length))
        except json.JSONDecodeError:
            self._reply(400, {"error": "malformed body"})
            return
        text = body.get("text")
        if not isinstance(text, str) or not text.strip():
            self._reply(400, {"error": "empty text"})
            return
        if state["malformed_response"]:
            self._reply(200, {"model_id": FAKE_MODEL_ID, "tokens": ["a", "b"], "logprobs": [-1.0]})
            return
        tokens, logprobs = fake_score(text, body.get("context"))
        self._reply(200, {"model_id": FAKE_MODEL_ID, "tokens": tokens, "logprobs": logprobs})

    def _reply(self, status, obj):
        payload = json.dumps(obj).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)


class MockProviderServer:
    def __init__(self):
        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), _ProviderHandler)
        self.httpd.state = {
            "requests": 0,
            "fail_next": 0,
            "malformed_response": False,
            "headers": [],
        }
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address
        return f"http://{host}:{port}"

    @property
    def state(self):
        return self.httpd.state

    def stop(self):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def mock_server():
    server = MockProviderServer()
    yield server
    server.stop()
