"""Simulation toolkit for low-dose hypothesis testing with diffractive electron optics."""

from .errors import (
    ConfigError,
    DomainError,
    GeometryError,
    LowdoseError,
    ParaxialError,
    ShapeError,
    SynthesisError,
)
from .field import BeamParameters, ComplexField, electron_wavelength
from .specimen import AbsorptionModel, Orientation, Phantom, generate_phantom

__version__ = "0.1.0"

__all__ = [
    "AbsorptionModel",
    "BeamParameters",
    "ComplexField",
    "ConfigError",
    "DomainError",
    "GeometryError",
    "LowdoseError",
    "Orientation",
    "ParaxialError",
    "Phantom",
    "ShapeError",
    "SynthesisError",
    "electron_wavelength",
    "generate_phantom",
]
