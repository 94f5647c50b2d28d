"""Length-conditioned null calibration of log-perplexity.

A NullTable holds, for each token count L, the sorted log-perplexities
of calibration sentences of exactly that length, plus a smoothed
gamma-family fit usable when a length bucket is too sparse. Querying
the table converts a sentence's log-perplexity into a P-value via the
add-one empirical survival

    p = (1 + #{calibration values >= x}) / (m + 1)

which is never exactly zero, so downstream combination statistics stay
finite. Ties count as >=. Sentences below ``min_len`` tokens are
excluded from both calibration and scoring; the default of 11 skips
sentences of 10 tokens or fewer, where the perplexity signal is too
weak to be useful.
"""

from __future__ import annotations

import json
from bisect import bisect_left
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.optimize import isotonic_regression
from scipy.stats import gamma as gamma_dist

from .errors import CalibrationError, SentenceTooShortError
from .lppt import LpptScore, lppt
from .providers import TokenizedSentence

# sentences with fewer than this many tokens are excluded; 11 skips
# everything of 10 tokens or fewer
DEFAULT_MIN_LEN = 11
DEFAULT_MIN_BUCKET = 30

TABLE_FORMAT = 1


@dataclass(frozen=True)
class LengthFit:
    """Moment-matched gamma survival for one token count."""

    shape: float
    loc: float
    scale: float

    def survival(self, x: float) -> float:
        if self.scale <= 0 or self.shape <= 0:
            # degenerate bucket (zero variance): step function at loc
            return 1.0 if x <= self.loc else 0.0
        return float(gamma_dist.sf(x - self.loc, a=self.shape, scale=self.scale))

    @property
    def mean(self) -> float:
        return self.loc + self.shape * self.scale

    @property
    def variance(self) -> float:
        return self.shape * self.scale * self.scale


@dataclass
class NullTable:
    """Empirical survival functions of null log-perplexity, per token count."""

    model_id: str
    policy: str
    min_len: int = DEFAULT_MIN_LEN
    min_bucket: int = DEFAULT_MIN_BUCKET
    per_length: dict[int, list[float]] = field(default_factory=dict)
    fit: dict[int, LengthFit] = field(default_factory=dict)

    @property
    def counts(self) -> dict[int, int]:
        return {length: len(vals) for length, vals in self.per_length.items()}

    @property
    def total_samples(self) -> int:
        return sum(len(v) for v in self.per_length.values())

    def is_sparse(self, length: int) -> bool:
        return len(self.per_length.get(length, ())) < self.min_bucket

    # --- persistence (format: 1) ---

    def to_json_obj(self) -> dict:
        return {
            "format": TABLE_FORMAT,
            "model_id": self.model_id,
            "policy": self.policy,
            "min_len": self.min_len,
            "min_bucket": self.min_bucket,
            "per_length": {str(k): v for k, v in sorted(self.per_length.items())},
            "fit": {
                str(k): {"loc": f.loc, "scale": f.scale, "shape": f.shape}
                for k, f in sorted(self.fit.items())
            },
            "counts": {str(k): len(v) for k, v in sorted(self.per_length.items())},
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_obj(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "NullTable":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if data.get("format") != TABLE_FORMAT:
            raise CalibrationError(
                f"unsupported table format {data.get('format')!r} in {path}"
            )
        return cls(
            model_id=data["model_id"],
            policy=data["policy"],
            min_len=int(data["min_len"]),
            min_bucket=int(data.get("min_bucket", DEFAULT_MIN_BUCKET)),
            per_length={int(k): list(map(float, v)) for k, v in data["per_length"].items()},
            fit={
                int(k): LengthFit(shape=f["shape"], loc=f["loc"], scale=f["scale"])
                for k, f in data.get("fit", {}).items()
            },
        )


def _fit_length_curves(
    buckets: dict[int, list[float]],
) -> dict[int, LengthFit]:
    """Fit a smoothed gamma family across lengths.

    Per-length sample means are made monotone non-increasing in length
    (longer sentences have lower average log-perplexity); variances are
    smoothed by a weighted running blend with their neighbors. Each
    length then gets moment-matched gamma parameters.
    """
    lengths = sorted(L for L, v in buckets.items() if len(v) >= 2)
    if not lengths:
        return {}
    means = np.array([float(np.mean(buckets[L])) for L in lengths])
    variances = np.array([float(np.var(buckets[L], ddof=1)) for L in lengths])
    weights = np.array([float(len(buckets[L])) for L in lengths])

    iso = isotonic_regression(means, weights=weights, increasing=False)
    smooth_means = np.asarray(iso.x, dtype=float)

    # pooled-neighbor variance: stabilizes tiny buckets without bending
    # the overall trend
    smooth_vars = np.empty_like(variances)
    for i in range(len(lengths)):
        lo, hi = max(0, i - 1), min(len(lengths), i + 2)
        w = weights[lo:hi]
        smooth_vars[i] = float(np.average(variances[lo:hi], weights=w))

    fits: dict[int, LengthFit] = {}
    for L, m, v in zip(lengths, smooth_means, smooth_vars):
        fits[L] = _moment_gamma(m, v)
    return fits


def _moment_gamma(mean: float, variance: float) -> LengthFit:
    if variance <= 0 or mean <= 0:
        return LengthFit(shape=0.0, loc=float(mean), scale=0.0)
    shape = mean * mean / variance
    scale = variance / mean
    return LengthFit(shape=float(shape), loc=0.0, scale=float(scale))


def _interpolated_fit(table: NullTable, length: int) -> LengthFit | None:
    """Fit parameters for ``length``, interpolating between fitted
    neighbors when the exact length was never fitted."""
    if length in table.fit:
        return table.fit[length]
    if not table.fit:
        return None
    fitted = sorted(table.fit)
    if length <= fitted[0]:
        return table.fit[fitted[0]]
    if length >= fitted[-1]:
        return table.fit[fitted[-1]]
    hi_idx = bisect_left(fitted, length)
    lo_L, hi_L = fitted[hi_idx - 1], fitted[hi_idx]
    t = (length - lo_L) / (hi_L - lo_L)
    lo_f, hi_f = table.fit[lo_L], table.fit[hi_L]
    mean = (1 - t) * lo_f.mean + t * hi_f.mean
    var = (1 - t) * lo_f.variance + t * hi_f.variance
    return _moment_gamma(mean, var)


def build_null_table(
    calibration: Iterable[TokenizedSentence],
    min_len: int = DEFAULT_MIN_LEN,
    min_bucket: int = DEFAULT_MIN_BUCKET,
) -> NullTable:
    """Estimate the length-conditioned survival table from calibration
    sentences.

    All sentences must have been scored under one model id and one
    context policy. Sentences shorter than ``min_len`` tokens are
    skipped (counted, not bucketed). Raises CalibrationError on mixed
    model ids or when nothing is usable.
    """
    if min_len < 1:
        raise CalibrationError("min_len must be >= 1")
    buckets: dict[int, list[float]] = {}
    model_id: str | None = None
    saw_context = False
    n_short = 0
    n_total = 0
    for sent in calibration:
        n_total += 1
        if model_id is None:
            model_id = sent.model_id
        elif sent.model_id != model_id:
            raise CalibrationError(
                f"mixed model ids in calibration stream: "
                f"{model_id!r} vs {sent.model_id!r} at {sent.key()}"
            )
        if sent.context_id is not None:
            saw_context = True
        n = len(sent.tokens)
        if n < min_len:
            n_short += 1
            continue
        buckets.setdefault(n, []).append(lppt(sent).lppt)
    if n_total == 0 or n_total == n_short:
        raise CalibrationError(
            f"no usable calibration sentences ({n_total} seen, {n_short} below "
            f"{min_len} tokens)"
        )
    for vals in buckets.values():
        vals.sort()
    policy = "preceding_sentence" if saw_context else "none"
    table = NullTable(
        model_id=model_id or "",
        policy=policy,
        min_len=min_len,
        min_bucket=min_bucket,
        per_length=buckets,
    )
    table.fit = _fit_length_curves(buckets)
    return table


def p_value(score: LpptScore, table: NullTable) -> float:
    """P-value of one log-perplexity score against the null table.

    Uses the exact-length bucket when it holds at least ``min_bucket``
    samples, otherwise the smoothed gamma survival (clamped so the
    result stays within [1/(total+1), 1]). A sparse bucket with no
    available fit falls back to its own add-one survival.
    """
    if score.n_tokens < table.min_len:
        raise SentenceTooShortError(score.n_tokens, table.min_len)
    bucket = table.per_length.get(score.n_tokens, [])
    m = len(bucket)
    if m >= table.min_bucket:
        return _add_one_survival(bucket, score.lppt)
    fit = _interpolated_fit(table, score.n_tokens)
    if fit is not None:
        total = table.total_samples
        floor = 1.0 / (total + 1)
        return min(1.0, max(floor, fit.survival(score.lppt)))
    if m >= 1:
        return _add_one_survival(bucket, score.lppt)
    raise CalibrationError(
        f"no calibration data for token count {score.n_tokens} and no fitted curve"
    )


def _add_one_survival(sorted_bucket: list[float], x: float) -> float:
    m = len(sorted_bucket)
    n_ge = m - bisect_left(sorted_bucket, x)
    return (1 + n_ge) / (m + 1)


@dataclass(frozen=True)
class PValueEntry:
    sent_index: int
    n_tokens: int
    lppt: float
    pvalue: float


@dataclass(frozen=True)
class ExcludedSentence:
    sent_index: int
    reason: str


@dataclass
class PValueVector:
    """Per-sentence P-values plus the excluded remainder; together the
    two lists cover every sentence of the document, in order."""

    entries: list[PValueEntry] = field(default_factory=list)
    excluded: list[ExcludedSentence] = field(default_factory=list)

    def pvalues(self) -> list[float]:
        return [e.pvalue for e in self.entries]


def score_document(
    sentences: list[TokenizedSentence], table: NullTable
) -> PValueVector:
    """Score each sentence against the table; short sentences land in
    ``excluded`` with reason "short". Output preserves sentence order."""
    vec = PValueVector()
    for sent in sentences:
        if sent.model_id != table.model_id:
            raise CalibrationError(
                f"sentence {sent.key()} was scored under model "
                f"{sent.model_id!r}, table holds {table.model_id!r}"
            )
        score = lppt(sent)
        if score.n_tokens < table.min_len:
            vec.excluded.append(ExcludedSentence(sent.sent_index, "short"))
            continue
        vec.entries.append(
            PValueEntry(
                sent_index=sent.sent_index,
                n_tokens=score.n_tokens,
                lppt=score.lppt,
                pvalue=p_value(score, table),
            )
        )
    return vec
