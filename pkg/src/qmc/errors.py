"""Exception types shared across the package."""


class QmcError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(QmcError):
    """Invalid argument or input data (bad shapes, NaN/Inf, empty input...)."""


class FormatError(QmcError):
    """Malformed file or stream structure (bad magic, unparseable header)."""


class IntegrityError(QmcError):
    """Structurally valid data failing an integrity check (CRC, truncation)."""


class CapabilityError(QmcError):
    """An optional feature is unavailable in this environment."""
