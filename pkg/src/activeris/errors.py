"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Array shapes do not agree."""


class DomainError(ValueError):
    """An argument lies outside its admissible range (e.g. a non-PSD covariance)."""


class CapabilityError(RuntimeError):
    """The requested oracle cannot handle the instance size."""


class ProvenanceError(RuntimeError):
    """Validation data shares its random stream with the training data."""
