"""Exception taxonomy shared across the package."""


class SsmStreamError(Exception):
    """Base class for all package errors."""


class ConfigurationError(SsmStreamError):
    """Invalid model configuration (sizes, step-size bounds, config files)."""


class ContractError(SsmStreamError):
    """Caller violated an API precondition (shapes, lengths, closed session)."""


class NumericError(SsmStreamError):
    """Non-finite values in inputs or intermediates."""


class StabilityError(SsmStreamError):
    """Continuous-time system is not strictly stable (Re(A) >= 0 somewhere)."""


class PlanError(SsmStreamError):
    """Stream length cannot be segmented under the given plan."""


class FormatError(SsmStreamError):
    """Malformed binary stream or checkpoint envelope."""
