"""Run a model over a document's sentences and emit wire records.

Sentence boundaries come from the primary analyzer, either via a spans
file produced by `hcedit segment` or by shelling out to that command,
so the exporter can never drift from the spans the analyzer will use.
"""

from __future__ import annotations

import json
import math
import subprocess
import sys
from dataclasses import dataclass
from pathlib import Path

from .models import load_model


class ExportError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExportJob:
    input_path: str
    model: str
    context_policy: str = "none"  # "none" | "prev"
    output_path: str = "-"
    doc_id: str | None = None
    spans_from: str | None = None
    device: str = "cpu"

    def resolved_doc_id(self) -> str:
        if self.doc_id:
            return self.doc_id
        return Path(self.input_path).stem


def read_spans_file(path: str | Path) -> tuple[str, list[dict]]:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    try:
        return obj["doc_id"], obj["spans"]
    except KeyError as exc:
        raise ExportError(f"spans file {path} missing key {exc}") from exc


def spans_via_primary(input_path: str, doc_id: str) -> list[dict]:
    """Shell out to the primary binary's `segment` subcommand."""
    cmd = [
        sys.executable, "-m", "hcedit.cli", "segment",
        "--doc", input_path, "--doc-id", doc_id,
    ]
    try:
        proc = subprocess.run(cmd, capture_output=True, text=True, check=True)
    except FileNotFoundError as exc:
        raise ExportError(f"cannot invoke the segmenter: {exc}") from exc
    except subprocess.CalledProcessError as exc:
        raise ExportError(
            f"segmenter failed (exit {exc.returncode}): {exc.stderr.strip()}"
        ) from exc
    return json.loads(proc.stdout)["spans"]


def sentence_records(spans: list[dict], model, doc_id: str, context_policy: str):
    """Yield one wire record per span, in order."""
    if context_policy not in ("none", "prev"):
        raise ExportError(f"unknown context policy {context_policy!r}")
    prev_text = None
    for span in spans:
        index = int(span["index"])
        text = span["text"]
        context = prev_text if (context_policy == "prev" and index > 0) else None
        tokens, logprobs = model.score(text, context)
        if len(tokens) != len(logprobs):
            raise ExportError(f"backend length mismatch at sentence {index}")
        for lp in logprobs:
            if not math.isfinite(lp) or lp > 0:
                raise ExportError(f"backend produced invalid logprob {lp!r} at sentence {index}")
        yield {
            "doc_id": doc_id,
            "sent_index": index,
            "tokens": tokens,
            "logprobs": logprobs,
            "context_id": str(index - 1) if context is not None else None,
            "model_id": model.model_id,
        }
        prev_text = text


def export(job: ExportJob) -> int:
    """Write one record per sentence of the input document; returns the
    record count."""
    doc_id = job.resolved_doc_id()
    if job.spans_from:
        spans_doc_id, spans = read_spans_file(job.spans_from)
        if job.doc_id is None:
            doc_id = spans_doc_id
    else:
        spans = spans_via_primary(job.input_path, doc_id)
    model = load_model(job.model, device=job.device)

    count = 0
    out = sys.stdout if job.output_path == "-" else open(job.output_path, "w", encoding="utf-8")
    try:
        for record in sentence_records(spans, model, doc_id, job.context_policy):
            out.write(json.dumps(record, ensure_ascii=False))
            out.write("\n")
            count += 1
    finally:
        if out is not sys.stdout:
            out.close()
    return count
