"""Per-token log-probability providers.

One contract, two transports: precomputed JSON Lines files and a remote
HTTP inference server. All probabilities on the wire are natural-log;
a provider working in another base must convert before emitting.

Wire record (one JSON object per line, UTF-8):

    {"doc_id": str, "sent_index": int, "tokens": [str],
     "logprobs": [float], "context_id": str|null, "model_id": str}

HTTP contract:

    POST {endpoint}/logprobs  body {"text": str, "context": str|null}
    -> 200 {"model_id": str, "tokens": [str], "logprobs": [float]}

The environment variable ``HC_EDIT_PROVIDER_TOKEN``, when set, is sent
as a bearer token.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import requests

from .errors import DataIntegrityError, ProtocolError, TransportError
from .segment import Document

CONTEXT_POLICIES = ("none", "preceding_sentence")

_RETRY_ATTEMPTS = 3
_BACKOFF_BASE_S = 0.5


@dataclass(frozen=True)
class TokenizedSentence:
    """A sentence as an ordered token sequence with per-token natural-log
    probabilities, as produced by a provider."""

    doc_id: str
    sent_index: int
    tokens: tuple[str, ...]
    logprobs: tuple[float, ...]
    context_id: str | None = None
    model_id: str = ""

    def __post_init__(self):
        validate_sentence_arrays(self.tokens, self.logprobs, where=self.key())

    def key(self) -> str:
        return f"{self.doc_id}#{self.sent_index}"


def validate_sentence_arrays(tokens, logprobs, where: str = "") -> None:
    """Enforce the TokenizedSentence invariants; raise on violation."""
    label = f" ({where})" if where else ""
    if len(tokens) != len(logprobs):
        raise ProtocolError(
            f"{len(tokens)} tokens but {len(logprobs)} logprobs{label}"
        )
    if len(tokens) == 0:
        raise ProtocolError(f"empty token list{label}")
    for lp in logprobs:
        if not math.isfinite(lp):
            raise DataIntegrityError(f"non-finite logprob {lp!r}{label}")
        if lp > 0:
            raise DataIntegrityError(f"positive logprob {lp!r}{label}")


@dataclass(frozen=True)
class ProviderDescriptor:
    """Where log probabilities come from: a recorded file or a server.

    ``model_id`` may be left empty and is then resolved from the
    provider's own records/responses on first fetch.
    """

    kind: str  # "file" | "http"
    endpoint_or_path: str
    model_id: str = ""

    @classmethod
    def parse(cls, spec: str) -> "ProviderDescriptor":
        """Parse a CLI-style spec: ``file:PATH`` or ``http:URL``."""
        if spec.startswith("file:"):
            return cls(kind="file", endpoint_or_path=spec[len("file:") :])
        if spec.startswith(("http:", "https:")):
            # accept both "http://host:port" and "http:host:port"
            rest = spec.split(":", 1)[1]
            if rest.startswith("//"):
                url = spec
            elif rest.startswith(("http://", "https://")):
                url = rest
            else:
                url = "http://" + rest
            return cls(kind="http", endpoint_or_path=url)
        raise ProtocolError(f"unrecognized provider spec {spec!r}")


# --- wire helpers -----------------------------------------------------------

_REQUIRED_KEYS = ("doc_id", "sent_index", "tokens", "logprobs", "model_id")


def record_to_sentence(rec: dict) -> TokenizedSentence:
    for k in _REQUIRED_KEYS:
        if k not in rec:
            raise ProtocolError(f"record missing key {k!r}")
    return TokenizedSentence(
        doc_id=str(rec["doc_id"]),
        sent_index=int(rec["sent_index"]),
        tokens=tuple(str(t) for t in rec["tokens"]),
        logprobs=tuple(float(x) for x in rec["logprobs"]),
        context_id=None if rec.get("context_id") is None else str(rec["context_id"]),
        model_id=str(rec["model_id"]),
    )


def sentence_to_record(s: TokenizedSentence) -> dict:
    return {
        "doc_id": s.doc_id,
        "sent_index": s.sent_index,
        "tokens": list(s.tokens),
        "logprobs": list(s.logprobs),
        "context_id": s.context_id,
        "model_id": s.model_id,
    }


def iter_logprob_file(path: str | Path) -> Iterator[TokenizedSentence]:
    """Stream TokenizedSentences from a JSONL file, validating each record."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ProtocolError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            yield record_to_sentence(rec)


def write_logprob_file(sentences: Iterable[TokenizedSentence], path: str | Path) -> int:
    """Write sentences in the wire format; returns the record count."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for s in sentences:
            fh.write(json.dumps(sentence_to_record(s), ensure_ascii=False))
            fh.write("\n")
            count += 1
    return count


@dataclass
class FileValidationSummary:
    records: int = 0
    token_total: int = 0
    violations: list[str] = field(default_factory=list)

    def ok(self) -> bool:
        return not self.violations


def validate_logprob_file(path: str | Path) -> FileValidationSummary:
    """Stream-check every record of a logprob file against the wire schema.

    The file is never loaded into memory as a whole. Malformed lines are
    reported as violations (with their line number) and processing
    continues.
    """
    summary = FileValidationSummary()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                summary.violations.append(f"line {lineno}: malformed JSON: {exc.msg}")
                continue
            try:
                sent = record_to_sentence(rec)
            except (ProtocolError, DataIntegrityError, ValueError, TypeError) as exc:
                summary.violations.append(f"line {lineno}: {exc}")
                continue
            summary.records += 1
            summary.token_total += len(sent.tokens)
    return summary


# --- context policy ---------------------------------------------------------


def expected_context_id(policy: str, sent_index: int) -> str | None:
    if policy == "none":
        return None
    if policy == "preceding_sentence":
        return None if sent_index == 0 else str(sent_index - 1)
    raise ProtocolError(f"unknown context policy {policy!r}")


# --- fetching ----------------------------------------------------------------


def fetch_logprobs(
    doc: Document,
    provider: ProviderDescriptor,
    context_policy: str = "none",
    session: requests.Session | None = None,
    backoff_base_s: float = _BACKOFF_BASE_S,
) -> list[TokenizedSentence]:
    """Return one TokenizedSentence per span of ``doc``, in span order.

    With ``context_policy="preceding_sentence"`` sentence i is
    conditioned on sentence i-1's text (no context for i = 0) and
    ``context_id`` records the preceding sentence index. All sentences
    must come back under a single model id.
    """
    if context_policy not in CONTEXT_POLICIES:
        raise ProtocolError(f"unknown context policy {context_policy!r}")
    if len(doc.sentences) == 0:
        raise ProtocolError(f"document {doc.doc_id!r} has no sentences")

    if provider.kind == "file":
        out = _fetch_from_file(doc, provider, context_policy)
    elif provider.kind == "http":
        out = _fetch_from_http(doc, provider, context_policy, session, backoff_base_s)
    else:
        raise ProtocolError(f"unknown provider kind {provider.kind!r}")

    model_ids = {s.model_id for s in out}
    if len(model_ids) != 1:
        raise ProtocolError(f"provider returned multiple model ids: {sorted(model_ids)}")
    resolved = model_ids.pop()
    if provider.model_id and provider.model_id != resolved:
        raise ProtocolError(
            f"provider advertises model {provider.model_id!r} "
            f"but returned {resolved!r}"
        )
    return out


# parsed-file cache so scoring many documents against one recorded file
# (e.g. null-document threshold calibration) stays linear in file size
_FILE_CACHE: dict[str, tuple[tuple, dict]] = {}
_FILE_CACHE_MAX = 4


def _file_index(path: str) -> dict:
    stat = os.stat(path)
    sig = (stat.st_size, stat.st_mtime_ns)
    hit = _FILE_CACHE.get(path)
    if hit is not None and hit[0] == sig:
        return hit[1]
    index: dict[str, dict[int, TokenizedSentence]] = {}
    for sent in iter_logprob_file(path):
        index.setdefault(sent.doc_id, {})[sent.sent_index] = sent
    if len(_FILE_CACHE) >= _FILE_CACHE_MAX:
        _FILE_CACHE.pop(next(iter(_FILE_CACHE)))
    _FILE_CACHE[path] = (sig, index)
    return index


def _fetch_from_file(doc, provider, context_policy):
    wanted = _file_index(provider.endpoint_or_path).get(doc.doc_id, {})
    out = []
    for span in doc.sentences:
        sent = wanted.get(span.index)
        if sent is None:
            raise ProtocolError(
                f"no logprob record for doc_id={doc.doc_id!r} "
                f"sent_index={span.index} in {provider.endpoint_or_path}"
            )
        expected = expected_context_id(context_policy, span.index)
        if sent.context_id != expected:
            raise ProtocolError(
                f"record {sent.key()} was produced with context_id="
                f"{sent.context_id!r}, but policy {context_policy!r} "
                f"expects {expected!r}"
            )
        out.append(sent)
    return out


def _fetch_from_http(doc, provider, context_policy, session, backoff_base_s):
    sess = session or requests.Session()
    url = provider.endpoint_or_path.rstrip("/") + "/logprobs"
    headers = {}
    token = os.environ.get("HC_EDIT_PROVIDER_TOKEN")
    if token:
        headers["Authorization"] = f"Bearer {token}"

    out = []
    for span in doc.sentences:
        context = None
        if context_policy == "preceding_sentence" and span.index > 0:
            context = doc.sentences[span.index - 1].text
        body = {"text": span.text, "context": context}
        payload = _post_with_retries(
            sess, url, body, headers, span.index, backoff_base_s
        )
        for key in ("model_id", "tokens", "logprobs"):
            if key not in payload:
                raise ProtocolError(
                    f"response for sentence {span.index} missing {key!r}"
                )
        out.append(
            TokenizedSentence(
                doc_id=doc.doc_id,
                sent_index=span.index,
                tokens=tuple(str(t) for t in payload["tokens"]),
                logprobs=tuple(float(x) for x in payload["logprobs"]),
                context_id=expected_context_id(context_policy, span.index),
                model_id=str(payload["model_id"]),
            )
        )
    return out


def _post_with_retries(sess, url, body, headers, sent_index, backoff_base_s):
    last_error = None
    for attempt in range(_RETRY_ATTEMPTS):
        if attempt > 0:
            time.sleep(backoff_base_s * 2 ** (attempt - 1))
        try:
            resp = sess.post(url, json=body, headers=headers, timeout=60)
        except requests.RequestException as exc:
            last_error = f"request failed: {exc}"
            continue
        if resp.status_code != 200:
            last_error = f"HTTP {resp.status_code}: {resp.text[:200]}"
            continue
        try:
            return resp.json()
        except ValueError as exc:
            raise ProtocolError(
                f"non-JSON response for sentence {sent_index}: {exc}"
            ) from exc
    raise TransportError(
        f"provider unreachable for sentence {sent_index} "
        f"after {_RETRY_ATTEMPTS} attempts: {last_error}",
        sent_index=sent_index,
    )
