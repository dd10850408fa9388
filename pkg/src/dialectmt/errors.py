"""Exception taxonomy shared across the package.

Errors are grouped so the CLI can map them onto exit codes: data problems
(bad input files, unknown dialects, corrupt indices) versus network problems
(embedding service or chat endpoint failures).
"""

from __future__ import annotations


class DialectMTError(Exception):
    """Base class for all package errors."""


class DataError(DialectMTError):
    """Problems with input data, corpora, or persisted artifacts."""


class NetworkError(DialectMTError):
    """Problems reaching or speaking to a remote service."""


class InvalidEncoding(DataError):
    """Input bytes are not valid UTF-8 (or text is not UTF-8 encodable)."""


class FormatError(DataError):
    """A corpus line or file does not match the declared format."""

    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class EmptyCorpus(DataError):
    """An operation that needs at least one record got none."""


class EmptyInput(DataError):
    """An operation that needs nonempty text got an empty string."""


class UnknownDialect(DataError):
    """The requested dialect does not occur in the corpus."""


class DimensionMismatch(DataError):
    """Vector dimension disagrees with the index or provider."""


class InvalidK(DataError):
    """A top-k request with k < 1."""


class VersionMismatch(DataError):
    """Index file has an unknown magic or unsupported format version."""


class ChecksumMismatch(DataError):
    """Index file is truncated or its checksum does not verify."""


class LengthMismatch(DataError):
    """Hypothesis and reference lists have different lengths."""


class EmptyReference(DataError):
    """WER reference has no tokens."""


class ProviderUnavailable(NetworkError):
    """Embedding provider could not be reached or kept failing."""


class AuthError(NetworkError):
    """Chat endpoint rejected the credentials (401/403); not retried."""


class RateLimited(NetworkError):
    """Chat endpoint kept answering 429 until retries were exhausted."""


class Timeout(NetworkError):
    """Request deadline exceeded after all retries."""


class TransportFailure(NetworkError):
    """Connection errors or 5xx responses exhausted all retries."""


class MalformedResponse(NetworkError):
    """Response body did not carry the expected fields."""


class ContentFiltered(NetworkError):
    """Model explicitly refused to produce a translation."""


class ApiError(NetworkError):
    """Non-retryable 4xx response other than auth failures."""

    def __init__(self, status: int, message: str):
        self.status = status
        super().__init__(f"HTTP {status}: {message}")


class AllTranslationsFailed(DialectMTError):
    """Every item in an evaluation batch errored; nothing to score."""
