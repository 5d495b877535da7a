"""Semantic exceptions shared across the package."""


class ValidationError(ValueError):
    """Inputs violate an operation contract (shape, domain, invariant)."""


class ConfigurationError(ValueError):
    """A config document or run setup is unusable (missing/illegal fields)."""


class TrainingDiverged(RuntimeError):
    """A training loop hit a non-finite loss and aborted."""
