"""Typed errors shared across the toolkit."""


class UsreconError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(UsreconError):
    """An argument violates a documented precondition."""


class InsufficientDataError(UsreconError):
    """Not enough observations/samples for the requested operation."""


class DegenerateGeometryError(UsreconError):
    """The observation geometry leaves parameters unidentifiable."""


class DegenerateSignalError(UsreconError):
    """A signal is constant (zero variance) where variation is required."""


class InvalidLandmarkError(UsreconError):
    """A landmark row is out of bounds for the scan it indexes."""


class FormatError(UsreconError):
    """A file does not conform to its documented format."""


class SchemaError(FormatError):
    """A structured text file is missing a required field."""


class ValidationError(FormatError):
    """A file parsed but its values violate an invariant."""
