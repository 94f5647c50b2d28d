"""Exception hierarchy shared across the package."""


class HcEditError(Exception):
    """Base class for all package errors."""


class SegmentationError(HcEditError):
    pass


class ProviderError(HcEditError):
    """Base class for log-probability provider failures."""


class TransportError(ProviderError):
    """Provider unreachable or returned a non-200 response.

    Carries the sentence index that was being fetched when the failure
    occurred (None when the failure is not sentence-specific).
    """

    def __init__(self, message, sent_index=None):
        super().__init__(message)
        self.sent_index = sent_index


class ProtocolError(ProviderError):
    """Provider response violates the wire contract (missing record,
    mismatched token/logprob lengths, inconsistent model ids, ...)."""


class DataIntegrityError(ProviderError):
    """A log probability is positive or non-finite."""


class CalibrationError(HcEditError):
    """Null-table construction or lookup failed."""


class SentenceTooShortError(HcEditError):
    """Signal (not a failure): the sentence is below the minimum token
    count and must be excluded rather than scored."""

    def __init__(self, n_tokens, min_len):
        super().__init__(
            f"sentence has {n_tokens} tokens, below the minimum of {min_len}"
        )
        self.n_tokens = n_tokens
        self.min_len = min_len


class MultipleTestingError(HcEditError):
    pass


class PipelineError(HcEditError):
    pass


class HarnessError(HcEditError):
    pass
