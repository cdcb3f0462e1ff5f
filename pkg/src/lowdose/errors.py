"""Exception types shared across the package."""


class LowdoseError(Exception):
    """Base class for all package errors."""


class DomainError(LowdoseError, ValueError):
    """An argument lies outside the domain of a physical formula."""


class GeometryError(LowdoseError, ValueError):
    """Sampling or layout of a grid cannot support the requested operation."""


class ParaxialError(GeometryError):
    """Wavelength too large compared with a structure for small-angle optics."""


class ShapeError(LowdoseError, ValueError):
    """Arrays or fields that must share a grid do not."""


class SynthesisError(LowdoseError):
    """A diffractive element could not be computed from the given waves."""


class ConfigError(LowdoseError, ValueError):
    """An experiment configuration failed validation."""
