"""Deterministic word-level n-gram language model.

A self-contained causal model for offline use: no downloads, no
framework, bit-stable probabilities across platforms. Add-k smoothing
over the highest order only; unknown words map to a single <unk> id for
probability lookups while the emitted token strings stay verbatim.
"""

from __future__ import annotations

import hashlib
import math
import re
from collections import Counter
from importlib import resources
from pathlib import Path

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")

_BOS = "<s>"
_UNK = "<unk>"

_SMOOTH_K = 0.1


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text)


def bundled_corpus_path() -> str:
    return str(resources.files("hcedit_exporter.data").joinpath("corpus.txt"))


class NgramModel:
    """Causal n-gram model trained on a plain-text corpus (one line per
    sentence-like unit)."""

    def __init__(self, order: int, corpus_path: str | Path):
        if order < 1:
            raise ValueError(f"order must be >= 1, got {order}")
        self.order = order
        raw = Path(corpus_path).read_bytes()
        digest = hashlib.sha256(raw).hexdigest()[:8]
        self.model_id = f"ngram{order}-{digest}"

        text = raw.decode("utf-8")
        vocab: set[str] = {_UNK}
        self._context_counts: Counter = Counter()
        self._gram_counts: Counter = Counter()
        for line in text.splitlines():
            words = tokenize(line)
            if not words:
                continue
            vocab.update(words)
            padded = [_BOS] * (order - 1) + words
            for i in range(order - 1, len(padded)):
                history = tuple(padded[i - order + 1 : i])
                word = padded[i]
                self._context_counts[history] += 1
                self._gram_counts[history + (word,)] += 1
        self.vocab = vocab
        self._vocab_size = len(vocab)

    def _known(self, word: str) -> str:
        return word if word in self.vocab else _UNK

    def _logprob(self, history: tuple[str, ...], word: str) -> float:
        c_hist = self._context_counts.get(history, 0)
        c_gram = self._gram_counts.get(history + (word,), 0)
        p = (c_gram + _SMOOTH_K) / (c_hist + _SMOOTH_K * self._vocab_size)
        return math.log(p)

    def score(self, text: str, context: str | None = None) -> tuple[list[str], list[float]]:
        """Per-token natural-log probabilities of ``text``, causally
        conditioned on ``context`` (token window crosses the boundary)."""
        tokens = tokenize(text)
        if not tokens:
            raise ValueError("cannot score empty text")
        prefix = tokenize(context) if context else []
        stream = [_BOS] * (self.order - 1) + [self._known(w) for w in prefix]
        logprobs = []
        for tok in tokens:
            history = tuple(stream[len(stream) - self.order + 1 :]) if self.order > 1 else ()
            word = self._known(tok)
            logprobs.append(self._logprob(history, word))
            stream.append(word)
        return tokens, logprobs
