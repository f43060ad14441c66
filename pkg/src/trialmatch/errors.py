"""Exception types shared across the pipeline.

Each class maps to one CLI exit code, see ``trialmatch.pipeline.cli``.
"""

from __future__ import annotations


class TrialMatchError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(TrialMatchError):
    """Invalid or inconsistent run configuration."""


class CorpusFormatError(TrialMatchError):
    """Malformed corpus record. Carries file and line context when known."""

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None):
        if path is not None and line is not None:
            message = f"{path}:{line}: {message}"
        elif path is not None:
            message = f"{path}: {message}"
        super().__init__(message)
        self.path = path
        self.line = line


class IntegrityError(TrialMatchError):
    """Cross-record referential integrity violation in a corpus."""


class EmbeddingServiceError(TrialMatchError):
    """Remote embedding endpoint unreachable or answered out of contract."""


class CacheError(TrialMatchError):
    """Embedding cache file is corrupt or inconsistent with the config."""


class PromptBudgetError(TrialMatchError):
    """Prompt cannot fit the word budget even with every chunk dropped."""


class UndefinedMetricError(TrialMatchError):
    """Metric has no defined value for the given inputs, e.g. single-class AUROC."""


class ArtifactError(TrialMatchError):
    """Missing, stale, or unreadable pipeline artifact."""
