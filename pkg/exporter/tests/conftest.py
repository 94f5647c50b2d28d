"""Shared helpers: corpus sampling and a threaded provider server."""

from __future__ import annotations

import threading

import numpy as np
import pytest

from hcedit_exporter import bundled_corpus_path, load_model, make_server


def corpus_lines() -> list[str]:
    with open(bundled_corpus_path(), encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip()]


def sampled_text(rng: np.random.Generator, n_sentences: int) -> str:
    lines = corpus_lines()
    picks = rng.integers(0, len(lines), size=n_sentences)
    return " ".join(lines[i] for i in picks)


@pytest.fixture(scope="session")
def ngram_model():
    return load_model("ngram:3")


@pytest.fixture
def running_server(ngram_model):
    httpd = make_server(ngram_model, port=0)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    host, port = httpd.server_address
    yield f"http://{host}:{port}"
    httpd.shutdown()
    httpd.server_close()
