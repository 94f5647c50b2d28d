"""End-to-end edit detection.

Scores each sentence of a document against a null calibration table,
combines the P-values with Higher Criticism, compares against a
threshold and, on rejection, reports the thresholded P-value set as the
suspected edits.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .calibration import NullTable, PValueVector, score_document
from .errors import PipelineError
from .multitest import DEFAULT_GAMMA0, CriticalValueTable, HCResult, hc, null_hc_sample
from .providers import ProviderDescriptor, TokenizedSentence, fetch_logprobs
from .segment import Document

logger = logging.getLogger(__name__)

REPORT_FORMAT = 1

PREVIEW_CHARS = 60


@dataclass
class ThresholdSpec:
    """How to obtain the HC rejection threshold.

    Precedence when several sources are present: an explicit ``value``
    wins, then calibration over ``null_docs``, then a critical-value
    ``table`` lookup at ``alpha`` (nearest n, erring to larger, with a
    recorded warning on mismatch).
    """

    value: float | None = None
    crit_table: CriticalValueTable | None = None
    null_docs: list[Document] | None = None
    alpha: float | None = None

    def resolve(
        self,
        n_testable: int,
        provider: ProviderDescriptor | None = None,
        table: NullTable | None = None,
    ) -> tuple[float, str, list[str]]:
        """Return (threshold, source, warnings) for a document with
        ``n_testable`` tested sentences."""
        warnings: list[str] = []
        if self.value is not None:
            return float(self.value), "user", warnings
        if self.null_docs is not None:
            if self.alpha is None:
                raise PipelineError("null-document calibration requires alpha")
            if provider is None or table is None:
                raise PipelineError(
                    "null-document calibration requires a provider and table"
                )
            if len(self.null_docs) < 1.0 / self.alpha:
                warnings.append(
                    f"only {len(self.null_docs)} null documents for "
                    f"alpha={self.alpha}; quantile is coarse"
                )
            thr = calibrate_threshold_from_null_docs(
                self.null_docs, provider, table, self.alpha
            )
            warnings.append(f"threshold from {len(self.null_docs)} null documents")
            return thr, "null_docs", warnings
        if self.crit_table is not None:
            if self.alpha is None:
                raise PipelineError("critical-value table lookup requires alpha")
            entry = self.crit_table.lookup(n_testable, self.alpha)
            if entry is None:
                raise PipelineError(
                    f"critical-value table has no entries for alpha={self.alpha}"
                )
            if entry.n != n_testable:
                warnings.append(
                    f"no critical value simulated for n={n_testable}; "
                    f"using nearest table n={entry.n}"
                )
            return entry.threshold, "table", warnings
        raise PipelineError("threshold spec is empty: nothing to resolve")


@dataclass
class DetectionReport:
    doc_id: str
    model_id: str
    policy: str
    n_tested: int
    n_excluded: int
    per_sentence: list[dict]
    excluded: list[dict]
    hc_result: HCResult
    threshold_used: float
    threshold_source: str
    threshold_warnings: list[str]
    verdict: str
    suspected: list[dict]
    hc_pvalue: float | None = None
    gamma0: float = DEFAULT_GAMMA0

    def to_json_obj(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "doc_id": self.doc_id,
            "model_id": self.model_id,
            "policy": self.policy,
            "n_tested": self.n_tested,
            "n_excluded": self.n_excluded,
            "per_sentence": self.per_sentence,
            "excluded": self.excluded,
            "hc": {
                "hc": self.hc_result.hc,
                "j_star": self.hc_result.j_star,
                "p_threshold": self.hc_result.p_threshold,
                "selected": list(self.hc_result.selected),
                "gamma0": self.hc_result.gamma0,
                "n": self.hc_result.n,
            },
            "threshold_used": self.threshold_used,
            "threshold_source": self.threshold_source,
            "threshold_warnings": self.threshold_warnings,
            "verdict": self.verdict,
            "suspected": self.suspected,
            "hc_pvalue": self.hc_pvalue,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), indent=2, sort_keys=True) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    def render_table(self) -> str:
        """Human-readable per-sentence table plus the verdict line."""
        lines = []
        header = f"{'idx':>4}  {'tokens':>6}  {'lppt':>8}  {'pvalue':>8}  sentence"
        lines.append(header)
        lines.append("-" * len(header))
        flagged = {s["sent_index"] for s in self.suspected}
        for row in self.per_sentence:
            mark = "*" if row["sent_index"] in flagged else " "
            lines.append(
                f"{row['sent_index']:>4}{mark} {row['n_tokens']:>6}  "
                f"{row['lppt']:>8.4f}  {row['pvalue']:>8.4f}  {row['text_preview']}"
            )
        lines.append("")
        hc_p = "n/a" if self.hc_pvalue is None else f"{self.hc_pvalue:.6f}"
        lines.append(
            f"HC {self.hc_result.hc:.6f} vs threshold {self.threshold_used:.6f} "
            f"({self.threshold_source}) -> {self.verdict}; HC-test P-value {hc_p}"
        )
        return "\n".join(lines) + "\n"


def _preview(text: str) -> str:
    flat = " ".join(text.split())
    if len(flat) <= PREVIEW_CHARS:
        return flat
    return flat[: PREVIEW_CHARS - 3] + "..."


def analyze(
    doc: Document,
    provider: ProviderDescriptor,
    table: NullTable,
    thr: ThresholdSpec,
    gamma0: float = DEFAULT_GAMMA0,
) -> DetectionReport:
    """Run the full detection pass over one document.

    Fetches log probabilities under the table's context policy, scores
    every sentence, computes HC and the verdict, and assembles the
    report. A report is only produced once every non-excluded sentence
    scored successfully.
    """
    if len(doc.sentences) == 0:
        raise PipelineError(f"document {doc.doc_id!r} has no sentences")
    sentences = fetch_logprobs(doc, provider, context_policy=table.policy)
    return analyze_scored(doc, sentences, table, thr, provider=provider, gamma0=gamma0)


def analyze_scored(
    doc: Document | None,
    sentences: list[TokenizedSentence],
    table: NullTable,
    thr: ThresholdSpec,
    provider: ProviderDescriptor | None = None,
    gamma0: float = DEFAULT_GAMMA0,
) -> DetectionReport:
    """Detection pass over already-fetched sentences (`analyze` without
    the transport step; also the entry point for synthetic studies)."""
    pvec = score_document(sentences, table)
    if not pvec.entries:
        raise PipelineError("no testable sentences (all below the length cutoff)")
    hcres = hc(pvec.pvalues(), gamma0=gamma0)
    threshold, source, warnings = thr.resolve(
        len(pvec.entries), provider=provider, table=table
    )
    for w in warnings:
        logger.warning("%s", w)

    verdict = "edited" if hcres.hc > threshold else "not_edited"
    suspected = _suspected_rows(pvec, hcres) if verdict == "edited" else []
    hc_pvalue = _hc_pvalue_from_table(thr.crit_table, len(pvec.entries), hcres.hc, gamma0)

    texts = {}
    if doc is not None:
        texts = {span.index: span.text for span in doc.sentences}
    per_sentence = [
        {
            "sent_index": e.sent_index,
            "text_preview": _preview(texts.get(e.sent_index, "")),
            "n_tokens": e.n_tokens,
            "lppt": e.lppt,
            "pvalue": e.pvalue,
        }
        for e in pvec.entries
    ]
    excluded = [{"sent_index": x.sent_index, "reason": x.reason} for x in pvec.excluded]
    doc_id = doc.doc_id if doc is not None else (sentences[0].doc_id if sentences else "")
    return DetectionReport(
        doc_id=doc_id,
        model_id=table.model_id,
        policy=table.policy,
        n_tested=len(pvec.entries),
        n_excluded=len(pvec.excluded),
        per_sentence=per_sentence,
        excluded=excluded,
        hc_result=hcres,
        threshold_used=float(threshold),
        threshold_source=source,
        threshold_warnings=warnings,
        verdict=verdict,
        suspected=suspected,
        hc_pvalue=hc_pvalue,
        gamma0=gamma0,
    )


def _suspected_rows(pvec: PValueVector, hcres: HCResult) -> list[dict]:
    # HC selection indexes into the tested P-value list; map back to
    # sentence indices and order by evidence strength
    by_pos = {i: e for i, e in enumerate(pvec.entries)}
    rows = [
        {"sent_index": by_pos[i].sent_index, "pvalue": by_pos[i].pvalue}
        for i in hcres.selected
    ]
    rows.sort(key=lambda r: (r["pvalue"], r["sent_index"]))
    return rows


def _hc_pvalue_from_table(
    crit_table: CriticalValueTable | None, n: int, observed: float, gamma0: float
) -> float | None:
    """Add-one smoothed fraction of simulated null HC values at or above
    the observed one, when the table pins a simulation for exactly this n."""
    if crit_table is None:
        return None
    entry = crit_table.entry_for_n(n)
    if entry is None:
        return None
    sample = null_hc_sample(n, entry.n_sims, entry.seed, gamma0)
    return float((1 + int((sample >= observed).sum())) / (entry.n_sims + 1))


def calibrate_threshold_from_null_docs(
    null_docs: list[Document],
    provider: ProviderDescriptor,
    table: NullTable,
    alpha: float,
) -> float:
    """Empirical (1-alpha) quantile of HC over known-null documents."""
    if len(null_docs) < 20:
        raise PipelineError(
            f"need at least 20 null documents, got {len(null_docs)}"
        )
    if not 0 < alpha < 1:
        raise PipelineError(f"alpha must be in (0,1), got {alpha}")
    if len(null_docs) < 1.0 / alpha:
        logger.warning(
            "only %d null documents for alpha=%s; quantile is coarse",
            len(null_docs),
            alpha,
        )
    hcs = []
    for doc in null_docs:
        sentences = fetch_logprobs(doc, provider, context_policy=table.policy)
        pvec = score_document(sentences, table)
        if not pvec.entries:
            raise PipelineError(
                f"null document {doc.doc_id!r} has no testable sentences"
            )
        hcs.append(hc(pvec.pvalues()).hc)
    return float(np.quantile(hcs, 1.0 - alpha, method="higher"))
