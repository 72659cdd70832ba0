"""Exception hierarchy shared across the package."""

from __future__ import annotations


class ClauseFinderError(Exception):
    """Base class for all package errors."""


class CorpusFormatError(ClauseFinderError):
    """Input corpus file is malformed or not in a recognized format."""


class CorpusIntegrityError(ClauseFinderError):
    """Corpus content violates an invariant (e.g. answer offsets do not match)."""


class SplitConfigError(ClauseFinderError):
    """The requested corpus split cannot be built from the available categories."""


class ChunkingError(ClauseFinderError):
    """Invalid chunking configuration or input."""


class RenderError(ClauseFinderError):
    """A prompt template could not be rendered."""


class BackendError(ClauseFinderError):
    """A model backend failed to produce a response.

    ``request`` carries the originating request so callers can record which
    cell failed without aborting a whole run.
    """

    def __init__(self, message: str, request=None):
        super().__init__(message)
        self.request = request


class TransientBackendError(BackendError):
    """A backend failure worth retrying (timeouts, connection resets, 5xx)."""


class EmbeddingError(ClauseFinderError):
    """An embedding could not be computed."""


class DistributionError(ClauseFinderError):
    """An answer-location distribution is undefined for the given inputs."""


class SelectionError(ClauseFinderError):
    """Candidate selection was called with inconsistent inputs."""


class ConfigError(ClauseFinderError):
    """Invalid or unknown configuration."""


class DependencyError(ClauseFinderError):
    """A pipeline stage was invoked before its upstream stages completed."""
