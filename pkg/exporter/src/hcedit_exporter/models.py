"""Model backends behind one scoring interface.

A backend exposes ``model_id`` and
``score(text, context) -> (tokens, logprobs)`` with natural-log
probabilities. Two families:

  * ``ngram:ORDER[:CORPUS]`` — the bundled deterministic n-gram model
    (offline, reproducible; CORPUS defaults to the packaged one);
  * anything else — a Hugging Face causal LM by name or path (requires
    the ``hf`` extra: torch + transformers).
"""

from __future__ import annotations

import math

from .ngram import NgramModel, bundled_corpus_path


class ModelError(RuntimeError):
    pass


def _looks_like_oom(exc: BaseException) -> bool:
    msg = str(exc).lower()
    return "out of memory" in msg or "can't allocate" in msg or "cannot allocate" in msg


def load_model(spec: str, device: str = "cpu"):
    if spec.startswith("ngram:"):
        parts = spec.split(":", 2)
        try:
            order = int(parts[1])
        except (IndexError, ValueError) as exc:
            raise ModelError(f"bad ngram spec {spec!r}; want ngram:ORDER[:CORPUS]") from exc
        corpus = parts[2] if len(parts) > 2 else bundled_corpus_path()
        try:
            return NgramModel(order, corpus)
        except (OSError, ValueError) as exc:
            raise ModelError(f"cannot build {spec!r}: {exc}") from exc
    return HFCausalModel(spec, device=device)


class HFCausalModel:
    """Hugging Face causal LM scored token by token.

    The sentence is encoded separately from its context and the id
    sequences concatenated; the first sentence token is conditioned on
    the model's begin-of-sequence token when no context is given.
    """

    def __init__(self, name: str, device: str = "cpu"):
        try:
            import torch
            from transformers import AutoModelForCausalLM, AutoTokenizer
        except ImportError as exc:
            raise ModelError(
                "transformers/torch not installed; use the ngram backend or "
                "install the 'hf' extra"
            ) from exc
        try:
            self._tokenizer = AutoTokenizer.from_pretrained(name)
            self._model = AutoModelForCausalLM.from_pretrained(name)
        except Exception as exc:  # model resolution is environment-dependent
            raise ModelError(f"cannot load model {name!r}: {exc}") from exc
        self._torch = torch
        self._device = device
        self._model.to(device)
        self._model.eval()
        self.model_id = name
        bos = self._tokenizer.bos_token_id
        if bos is None:
            bos = self._tokenizer.eos_token_id
        if bos is None:
            raise ModelError(f"model {name!r} has neither BOS nor EOS token")
        self._bos_id = int(bos)

    def score(self, text: str, context: str | None = None) -> tuple[list[str], list[float]]:
        if not text.strip():
            raise ValueError("cannot score empty text")
        tok = self._tokenizer
        sent_ids = tok.encode(text, add_special_tokens=False)
        if not sent_ids:
            raise ValueError("tokenizer produced no tokens")
        ctx_ids = tok.encode(context, add_special_tokens=False) if context else []
        ids = [self._bos_id] + ctx_ids + sent_ids
        start = 1 + len(ctx_ids)
        try:
            logprobs = self._token_logprobs(ids, start)
        except RuntimeError as exc:
            if not _looks_like_oom(exc):
                raise
            # chunked retry: rescore in windows with bounded left context
            window = max(16, len(ids) // 2)
            try:
                logprobs = self._token_logprobs_windowed(ids, start, window)
            except RuntimeError as exc2:
                if _looks_like_oom(exc2):
                    raise ModelError(
                        f"out of memory even at window {window}; "
                        f"sentence of {len(sent_ids)} tokens is too large"
                    ) from exc2
                raise
        tokens = tok.convert_ids_to_tokens(sent_ids)
        for lp in logprobs:
            if not math.isfinite(lp):
                raise ModelError("model produced a non-finite log probability")
        return list(tokens), logprobs

    def _token_logprobs(self, ids: list[int], start: int) -> list[float]:
        """Log probability of ids[start:] given their full prefixes, from
        one forward pass."""
        torch = self._torch
        input_ids = torch.tensor([ids], device=self._device)
        with torch.no_grad():
            logits = self._model(input_ids).logits[0]
        log_softmax = torch.log_softmax(logits, dim=-1)
        return [
            min(float(log_softmax[pos - 1, ids[pos]]), 0.0)
            for pos in range(start, len(ids))
        ]

    def _token_logprobs_windowed(self, ids: list[int], start: int, window: int) -> list[float]:
        """Same as ``_token_logprobs`` but each token sees at most
        ``window - 1`` tokens of left context (memory-bounded
        approximation used after an out-of-memory failure)."""
        torch = self._torch
        out = []
        for pos in range(start, len(ids)):
            lo = max(0, pos + 1 - window)
            piece = ids[lo : pos + 1]
            input_ids = torch.tensor([piece], device=self._device)
            with torch.no_grad():
                logits = self._model(input_ids).logits[0]
            log_softmax = torch.log_softmax(logits[-2], dim=-1)
            out.append(min(float(log_softmax[piece[-1]]), 0.0))
        return out
