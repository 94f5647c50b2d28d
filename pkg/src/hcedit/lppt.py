"""Normalized log-perplexity of a tokenized sentence.

The score is the negated arithmetic mean of the per-token natural-log
probabilities. Context conditioning (when any) is already baked into the
log probabilities by the provider, so the arithmetic here is identical
for the plain and context-conditioned variants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .providers import TokenizedSentence


@dataclass(frozen=True)
class LpptScore:
    """Log-perplexity of one sentence, in nats per token."""

    sent_index: int
    lppt: float
    n_tokens: int


def lppt(sentence: TokenizedSentence) -> LpptScore:
    """Return the normalized log-perplexity of ``sentence``.

    The mean is accumulated with compensated summation (``math.fsum``)
    so results are bit-identical across platforms and sentence lengths.

    Raises ValueError on an empty token list.
    """
    n = len(sentence.logprobs)
    if n == 0:
        raise ValueError("cannot score a sentence with no tokens")
    # +0.0 normalizes -0.0 (all-certain tokens) for stable serialization
    value = -math.fsum(sentence.logprobs) / n + 0.0
    return LpptScore(sent_index=sentence.sent_index, lppt=value, n_tokens=n)
