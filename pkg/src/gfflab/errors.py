"""Shared exception types."""


class InvalidSizeError(ValueError):
    """Box too small to have an interior."""


class RangeError(ValueError):
    """Parameter outside its admissible range."""


class MeshTooCoarseError(ValueError):
    """Mesh density below the supported minimum."""


class DomainEmptyError(ValueError):
    """No free vertex remains after killing."""


class PrecisionError(RuntimeError):
    """Iterative refinement failed to stabilize."""


class ParityError(ValueError):
    """Edge-parity assignment admits no valid configuration."""


class AcceptanceStarvationError(RuntimeError):
    """Rejection sampler acceptance rate too low to be usable."""


class ConstructionError(RuntimeError):
    """An internal consistency identity failed during construction."""


class InfeasibleConstraintError(ValueError):
    """Constraint region is empty or effectively unreachable."""


class SchemaError(ValueError):
    """Input table does not match the documented schema."""
