"""Edit detection for machine-generated text.

Tests whether a document was written entirely by a given generative
language model or contains a sparse set of edited sentences, by
combining per-sentence log-perplexity P-values with the Higher
Criticism statistic, and localizes the suspected edits.
"""

from .calibration import (
    NullTable,
    PValueEntry,
    PValueVector,
    build_null_table,
    p_value,
    score_document,
)
from .errors import (
    CalibrationError,
    DataIntegrityError,
    HarnessError,
    HcEditError,
    MultipleTestingError,
    PipelineError,
    ProtocolError,
    SentenceTooShortError,
    TransportError,
)
from .harness import (
    AltSpec,
    ArticlePair,
    MixedDocument,
    MixSpec,
    PowerEstimate,
    estimate_power,
    mix,
    mixture_mc,
)
from .lppt import LpptScore, lppt
from .multitest import (
    CriticalValueTable,
    HCResult,
    bh_select,
    fisher,
    hc,
    hc_plus,
    null_hc_sample,
    simulate_critical_values,
)
from .pipeline import (
    DetectionReport,
    ThresholdSpec,
    analyze,
    analyze_scored,
    calibrate_threshold_from_null_docs,
)
from .providers import (
    ProviderDescriptor,
    TokenizedSentence,
    fetch_logprobs,
    iter_logprob_file,
    validate_logprob_file,
    write_logprob_file,
)
from .segment import Document, SegmentationConfig, SentenceSpan, segment

__version__ = "0.1.0"

__all__ = [
    "AltSpec",
    "ArticlePair",
    "CalibrationError",
    "CriticalValueTable",
    "DataIntegrityError",
    "DetectionReport",
    "Document",
    "HarnessError",
    "HCResult",
    "HcEditError",
    "LpptScore",
    "MixedDocument",
    "MixSpec",
    "MultipleTestingError",
    "NullTable",
    "PipelineError",
    "PowerEstimate",
    "ProtocolError",
    "ProviderDescriptor",
    "PValueEntry",
    "PValueVector",
    "SegmentationConfig",
    "SentenceSpan",
    "SentenceTooShortError",
    "ThresholdSpec",
    "TokenizedSentence",
    "TransportError",
    "analyze",
    "analyze_scored",
    "bh_select",
    "build_null_table",
    "calibrate_threshold_from_null_docs",
    "estimate_power",
    "fetch_logprobs",
    "fisher",
    "hc",
    "hc_plus",
    "iter_logprob_file",
    "lppt",
    "mix",
    "mixture_mc",
    "null_hc_sample",
    "p_value",
    "score_document",
    "segment",
    "simulate_critical_values",
    "validate_logprob_file",
    "write_logprob_file",
]
