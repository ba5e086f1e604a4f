"""Exception hierarchy shared across the pipeline."""


class ArtContextError(Exception):
    """Base class for all pipeline errors."""


class IngestError(ArtContextError):
    """Metadata could not be read or lacks mandatory columns."""


class PreconditionError(ArtContextError, ValueError):
    """An operation was called with inputs outside its contract."""


class ContractViolation(ArtContextError):
    """Data produced or loaded does not match its declared shape/schema."""


class CorruptionError(ArtContextError):
    """Stored payload failed its integrity check."""


class ConfigurationError(ArtContextError):
    """Missing or inconsistent configuration (fixture tables, paths, ...)."""


class GatewayError(ArtContextError):
    """Model backend failure."""


class RetryableGatewayError(GatewayError):
    """Transport-level failure; the request may be retried."""


class MissingArtifactError(ArtContextError):
    """An upstream pipeline artifact has not been produced yet."""

    def __init__(self, path):
        self.path = path
        super().__init__(f"missing artifact: {path}")
