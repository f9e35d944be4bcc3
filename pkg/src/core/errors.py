"""Exception types shared across the pipeline."""


class CoreError(Exception):
    """Base class for all pipeline errors."""


class ParseError(CoreError):
    """Input file or report could not be parsed."""


class ValidationError(CoreError):
    """A value violates a structural invariant."""


class UnknownCheck(CoreError):
    """Requested check id is not present in the catalog."""


class CatalogError(CoreError):
    """Catalog could not be loaded or is unusable for this run."""


class ConfigError(CoreError):
    """Run configuration is invalid."""


class InvalidPattern(CoreError):
    """A line pattern does not compile."""


class SpawnError(CoreError):
    """External analyzer process could not be started."""


class AnalyzerCrashed(CoreError):
    """External analyzer exited abnormally without producing a report."""


class UnsupportedLanguage(CoreError):
    """No block parser registered for the requested language."""


class BudgetTooSmall(CoreError):
    """Even a single source line exceeds the token budget."""


class SpanOutOfRange(CoreError):
    """A block span does not fit the content it is applied to."""


class EmptyDiff(CoreError):
    """Ranker prompt requested for an empty diff."""


class UnparsableScore(CoreError):
    """Ranker response does not contain a usable score."""


class CacheCorrupt(CoreError):
    """Replay cache file contains an unreadable record."""


class BackendError(CoreError):
    """Completion backend failed a request."""


class RetryableBackendError(BackendError):
    """Transient backend failure; the request may be retried."""


class AllSamplesFailed(CoreError):
    """Every sample request for a prompt failed."""

    def __init__(self, failures):
        self.failures = list(failures)
        super().__init__(f"all {len(self.failures)} samples failed")
