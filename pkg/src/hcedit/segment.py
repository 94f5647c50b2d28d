"""Rule-based sentence segmentation with stable character offsets.

The segmenter is deterministic on purpose: downstream P-values must be
reproducible across runs, so no statistical or model-based splitting is
used. Boundaries are:

  * a run of terminal punctuation (``.``, ``!``, ``?``) followed by
    whitespace or end of text, unless the token ending in ``.`` is a
    known abbreviation;
  * a paragraph break (blank line), unconditionally;
  * end of input.

Spans never start or end with whitespace, and every non-whitespace
character of the input belongs to exactly one span (at the default
``min_chars=1``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import SegmentationError

_TERMINALS = ".!?"


def _default_abbreviations() -> frozenset[str]:
    raw = resources.files("hcedit.data").joinpath("abbreviations.json").read_text("utf-8")
    return frozenset(a.lower() for a in json.loads(raw)["abbreviations"])


@dataclass(frozen=True)
class SegmentationConfig:
    """Segmentation rules: abbreviation exceptions and a minimum span size.

    ``abbreviations`` is matched case-insensitively against the
    whitespace-delimited token ending at a candidate boundary period.
    Spans shorter than ``min_chars`` characters are dropped.
    """

    abbreviations: frozenset[str] = field(default_factory=_default_abbreviations)
    min_chars: int = 1

    @classmethod
    def from_json(cls, path: str | Path) -> "SegmentationConfig":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        abbr = data.get("abbreviations")
        if abbr is None:
            abbreviations = _default_abbreviations()
        else:
            abbreviations = frozenset(a.lower() for a in abbr)
        min_chars = int(data.get("min_chars", 1))
        if min_chars < 1:
            raise SegmentationError("min_chars must be >= 1")
        return cls(abbreviations=abbreviations, min_chars=min_chars)


@dataclass(frozen=True)
class SentenceSpan:
    """A sentence as a half-open character range [start, end) of the document."""

    index: int
    start: int
    end: int
    text: str

    def __post_init__(self):
        if not self.start < self.end:
            raise SegmentationError(f"empty span at {self.start}")


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    sentences: tuple[SentenceSpan, ...]

    def __len__(self) -> int:
        return len(self.sentences)


def _is_abbreviation(text: str, dot_idx: int, abbreviations: frozenset[str]) -> bool:
    """Whether the whitespace-delimited token ending at text[dot_idx] == '.'
    is a registered abbreviation."""
    k = dot_idx
    while k > 0 and not text[k - 1].isspace():
        k -= 1
    return text[k : dot_idx + 1].lower() in abbreviations


def segment(text: str, rules: SegmentationConfig | None = None, doc_id: str = "doc") -> Document:
    """Split ``text`` into ordered, non-overlapping sentence spans.

    Empty input yields a document with zero sentences.
    """
    cfg = rules if rules is not None else SegmentationConfig()
    spans: list[SentenceSpan] = []
    n = len(text)

    start: int | None = None  # first non-ws char of the current sentence
    end = 0  # one past the last non-ws char seen so far

    def close() -> None:
        nonlocal start
        if start is not None and end - start >= cfg.min_chars:
            spans.append(SentenceSpan(len(spans), start, end, text[start:end]))
        start = None

    i = 0
    while i < n:
        c = text[i]
        if c.isspace():
            if start is not None and c == "\n":
                # paragraph break: newline, optional intra-line whitespace, newline
                j = i + 1
                while j < n and text[j] in " \t\r":
                    j += 1
                if j < n and text[j] == "\n":
                    close()
                    i = j + 1
                    continue
            i += 1
            continue
        if start is None:
            start = i
        end = i + 1
        if c in _TERMINALS:
            run_start = i
            j = i + 1
            while j < n and text[j] in _TERMINALS:
                j += 1
            end = j
            i = j
            at_boundary = j >= n or text[j].isspace()
            # the exception applies only to a lone period, never to runs
            # like "?!" or "..."
            is_abbrev = (
                j - run_start == 1
                and c == "."
                and _is_abbreviation(text, run_start, cfg.abbreviations)
            )
            if at_boundary and not is_abbrev:
                close()
            continue
        i += 1
    close()
    return Document(doc_id=doc_id, text=text, sentences=tuple(spans))
