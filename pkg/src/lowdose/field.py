"""Scalar electron wavefields and free-space propagation.

Two propagators are provided:

* :func:`propagate_angular_spectrum` keeps the grid and is used for short hops.
  It applies the exact free-space transfer function, which is unitary as long
  as every grid frequency propagates and the transfer-function chirp is
  sampled without aliasing (see :func:`angular_spectrum_limit`).
* :func:`propagate_fresnel_scaled` is a single-FFT Fresnel transform whose
  output pixel is ``wavelength * distance / (n * pixel_size)``.  It bridges
  planes whose natural sampling differs by orders of magnitude.

Fields carry amplitudes normalised so that ``sum(|v|**2) * pixel_size**2`` is
the physical power; both propagators conserve that quantity.  Global phase is
not tracked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import constants

from .errors import DomainError, GeometryError, ShapeError

__all__ = [
    "BeamParameters",
    "ComplexField",
    "angular_spectrum_limit",
    "centered_coordinates",
    "electron_wavelength",
    "fresnel_sampling_limit",
    "point_source_illumination",
    "propagate_angular_spectrum",
    "propagate_fresnel_scaled",
]

_H = constants.h
_M0 = constants.m_e
_E = constants.e
_C = constants.c
#: electron rest energy in eV
REST_ENERGY_EV = _M0 * _C**2 / _E


def electron_wavelength(energy):
    """Relativistic de Broglie wavelength in metres for a kinetic energy in eV.

    Accepts scalars or arrays.
    """
    e = np.asarray(energy, dtype=float)
    if np.any(~np.isfinite(e)) or np.any(e <= 0):
        raise DomainError(f"electron energy must be positive and finite, got {energy!r}")
    lam = _H / np.sqrt(2 * _M0 * _E * e * (1 + _E * e / (2 * _M0 * _C**2)))
    return float(lam) if lam.ndim == 0 else lam


@dataclass(frozen=True)
class BeamParameters:
    """Electron beam defined by its kinetic energy (eV)."""

    energy: float

    def __post_init__(self):
        if not (math.isfinite(self.energy) and self.energy > 0):
            raise DomainError(f"beam energy must be positive, got {self.energy!r}")

    @property
    def wavelength(self) -> float:
        return electron_wavelength(self.energy)


def centered_coordinates(n: int, pixel_size: float) -> np.ndarray:
    """Sample positions ``(i - n//2) * pixel_size``; index ``n//2`` is the optical axis."""
    return (np.arange(n) - n // 2) * pixel_size


@dataclass(frozen=True, eq=False)
class ComplexField:
    """Complex amplitude on a square-pixel grid.

    ``values[ix, iy]`` is sampled at ``x = (ix - nx//2) * pixel_size`` and
    ``y = (iy - ny//2) * pixel_size``.  The array is copied on construction and
    marked read-only.
    """

    values: np.ndarray
    pixel_size: float

    def __post_init__(self):
        v = np.array(self.values, dtype=np.complex128, copy=True)
        if v.ndim != 2 or 0 in v.shape:
            raise ShapeError(f"field must be a non-empty 2D array, got shape {v.shape}")
        if not (math.isfinite(self.pixel_size) and self.pixel_size > 0):
            raise DomainError(f"pixel_size must be positive, got {self.pixel_size!r}")
        if not np.all(np.isfinite(v)):
            raise DomainError("field contains NaN or Inf")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "pixel_size", float(self.pixel_size))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def nx(self) -> int:
        return self.values.shape[0]

    @property
    def ny(self) -> int:
        return self.values.shape[1]

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    @property
    def total_intensity(self) -> float:
        return float(np.sum(self.intensity) * self.pixel_size**2)

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(X, Y)`` coordinate grids in metres (``ij`` indexing)."""
        x = centered_coordinates(self.nx, self.pixel_size)
        y = centered_coordinates(self.ny, self.pixel_size)
        return np.meshgrid(x, y, indexing="ij")

    def with_values(self, values: np.ndarray) -> ComplexField:
        return ComplexField(values, self.pixel_size)

    def multiply(self, factor) -> ComplexField:
        """Pointwise product with a scalar or an array of the same shape."""
        factor = np.asarray(factor)
        if factor.ndim and factor.shape != self.shape:
            raise ShapeError(f"factor shape {factor.shape} does not match field {self.shape}")
        return ComplexField(self.values * factor, self.pixel_size)

    @classmethod
    def plane_wave(cls, shape, pixel_size: float, amplitude: complex = 1.0) -> ComplexField:
        return cls(np.full(shape, amplitude, dtype=np.complex128), pixel_size)


def _frequencies(n: int, pixel_size: float) -> np.ndarray:
    return np.fft.fftfreq(n, d=pixel_size)


def angular_spectrum_limit(shape, pixel_size: float, wavelength: float) -> float:
    """Largest |distance| for which the angular-spectrum step is alias-free.

    The transfer function ``exp(2j*pi*z*sqrt(1/wl**2 - f**2))`` is sampled with
    frequency step ``1/(n*dx)``.  Its local chirp rate at the band edge
    ``f = 1/(2*dx)`` stays below Nyquist for
    ``|z| <= n * dx**2 * sqrt(1/wl**2 - 1/(4*dx**2))``, which is ``n*dx**2/wl``
    in the paraxial limit.  Within that range a band-limiting window would keep
    every grid frequency, so the propagation is exactly unitary.
    """
    n = min(shape)
    fmax = 1.0 / (2.0 * pixel_size)
    if fmax >= 1.0 / wavelength:
        return 0.0
    return n * pixel_size**2 * math.sqrt(1.0 / wavelength**2 - fmax**2)


def propagate_angular_spectrum(field: ComplexField, distance: float, wavelength: float) -> ComplexField:
    """Propagate ``field`` by ``distance`` (may be negative) on the same grid.

    Raises :class:`GeometryError` when the grid frequencies include evanescent
    components or when ``|distance|`` exceeds :func:`angular_spectrum_limit`.
    """
    if not (wavelength > 0 and math.isfinite(wavelength)):
        raise DomainError(f"wavelength must be positive, got {wavelength!r}")
    if distance == 0:
        return field
    dx = field.pixel_size
    if 1.0 / (2.0 * dx) >= 1.0 / wavelength:
        raise GeometryError(
            f"pixel {dx:.3e} m is below half the wavelength {wavelength:.3e} m; "
            "grid contains evanescent frequencies"
        )
    limit = angular_spectrum_limit(field.shape, dx, wavelength)
    if abs(distance) > limit:
        raise GeometryError(
            f"|distance| = {abs(distance):.3e} m exceeds the angular-spectrum limit "
            f"{limit:.3e} m for n={min(field.shape)}, dx={dx:.3e} m, wl={wavelength:.3e} m; "
            "use propagate_fresnel_scaled or a finer/larger grid"
        )
    fx = _frequencies(field.nx, dx)[:, None]
    fy = _frequencies(field.ny, dx)[None, :]
    f2 = fx**2 + fy**2
    k_inv = 1.0 / wavelength
    # sqrt(1/wl^2 - f^2) - 1/wl without cancellation; removes the global phase
    kz_minus_k = -f2 / (np.sqrt(k_inv**2 - f2) + k_inv)
    transfer = np.exp(2j * np.pi * distance * kz_minus_k)
    out = np.fft.ifft2(np.fft.fft2(field.values) * transfer)
    return ComplexField(out, dx)


def _centered_fft2(a: np.ndarray) -> np.ndarray:
    return np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(a), norm="ortho"))


def fresnel_sampling_limit(n: int, pixel_size: float, wavelength: float) -> float:
    """Smallest distance at which the Fresnel chirp ``exp(i*pi*r**2/(wl*z))`` is Nyquist-sampled."""
    return n * pixel_size**2 / wavelength


def propagate_fresnel_scaled(field: ComplexField, distance: float, wavelength: float) -> ComplexField:
    """Single-transform Fresnel propagation onto a rescaled grid.

    Output pixel size is ``wavelength * distance / (n * pixel_size)``.  The
    grid must be square.  The constant factor ``exp(ikz)/i`` is dropped.
    """
    if not (distance > 0 and math.isfinite(distance)):
        raise DomainError(
            f"Fresnel transform needs a positive distance, got {distance!r}; "
            "use propagate_angular_spectrum for short or backward hops"
        )
    if not (wavelength > 0 and math.isfinite(wavelength)):
        raise DomainError(f"wavelength must be positive, got {wavelength!r}")
    if field.nx != field.ny:
        raise ShapeError(f"Fresnel transform requires a square grid, got {field.shape}")
    n = field.nx
    dx = field.pixel_size
    dout = wavelength * distance / (n * dx)
    x = centered_coordinates(n, dx)
    u = centered_coordinates(n, dout)
    chirp_in = np.exp(1j * np.pi * x**2 / (wavelength * distance))
    chirp_out = np.exp(1j * np.pi * u**2 / (wavelength * distance))
    inner = field.values * chirp_in[:, None] * chirp_in[None, :]
    out = _centered_fft2(inner) * (chirp_out[:, None] * chirp_out[None, :]) * (dx / dout)
    return ComplexField(out, dout)


def point_source_illumination(shape, pixel_size: float, source_distance: float, wavelength: float) -> ComplexField:
    """Paraxial spherical wave from a point source ``source_distance`` upstream.

    ``source_distance=math.inf`` (or ``None``) gives a unit plane wave.
    """
    if source_distance is None or source_distance == math.inf:
        return ComplexField.plane_wave(shape, pixel_size)
    if not source_distance > 0:
        raise DomainError(f"source_distance must be positive, got {source_distance!r}")
    if not wavelength > 0:
        raise DomainError(f"wavelength must be positive, got {wavelength!r}")
    x = centered_coordinates(shape[0], pixel_size)
    y = centered_coordinates(shape[1], pixel_size)
    phase = np.pi * (x[:, None] ** 2 + y[None, :] ** 2) / (wavelength * source_distance)
    return ComplexField(np.exp(1j * phase), pixel_size)
