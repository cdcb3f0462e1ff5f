"""Projected-potential specimen model and procedural test phantoms.

The specimen is a single projected plane: its exit wave is the incident wave
times a phase factor from the mean inner potential and, optionally, an
amplitude factor from inelastic scattering (electrons scattered inelastically
are lost to the coherent measurement and counted as absorbed).
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from .errors import DomainError, GeometryError, ShapeError
from .field import REST_ENERGY_EV, ComplexField, centered_coordinates, electron_wavelength
from .imageio import read_csv_grid, read_pgm, write_csv_grid, write_pgm

__all__ = [
    "AbsorptionModel",
    "Orientation",
    "Phantom",
    "beam_illumination",
    "exit_wave",
    "generate_phantom",
    "interaction_constant",
    "rotate90",
]

#: mean inner potential of amorphous carbon (V), electron-holography value
CARBON_INNER_POTENTIAL = 10.7
#: protein density relative to amorphous carbon
PROTEIN_DENSITY_SCALE = 0.7


def interaction_constant(energy: float) -> float:
    """Relativistic interaction constant in rad / (V m) for an energy in eV."""
    if not (energy > 0 and math.isfinite(energy)):
        raise DomainError(f"energy must be positive, got {energy!r}")
    lam = electron_wavelength(energy)
    return 2 * math.pi / (lam * energy) * (REST_ENERGY_EV + energy) / (2 * REST_ENERGY_EV + energy)


class Orientation(enum.Enum):
    RIGHT = "right"
    WRONG = "wrong"


def rotate90(a: np.ndarray) -> np.ndarray:
    """Rotate a square array by +90 degrees about the optical-axis pixel ``(n//2, n//2)``."""
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"rotation needs a square 2D array, got {a.shape}")
    n = a.shape[0]
    # np.rot90 pivots on (n-1)/2; shift so the pivot is n//2
    return np.roll(np.rot90(a), 2 * (n // 2) - n + 1, axis=0)


@dataclass(frozen=True, eq=False)
class Phantom:
    """Projected-thickness specimen.

    Attributes
    ----------
    thickness : ndarray
        Projected thickness in metres, ``thickness[ix, iy]``.
    pixel_size : float
        Grid pitch in metres.
    inner_potential : float
        Mean inner potential of the reference material (V).
    density_scale : float
        Specimen density relative to the reference material; scales the phase.
    extent : float
        Diameter of the disk that bounds the support.
    """

    thickness: np.ndarray
    pixel_size: float
    inner_potential: float = CARBON_INNER_POTENTIAL
    density_scale: float = PROTEIN_DENSITY_SCALE
    extent: float = 25e-9

    def __post_init__(self):
        t = np.array(self.thickness, dtype=float, copy=True)
        if t.ndim != 2:
            raise ShapeError(f"thickness must be 2D, got {t.shape}")
        if not np.all(np.isfinite(t)) or np.any(t < 0):
            raise DomainError("thickness must be finite and non-negative")
        if not self.pixel_size > 0:
            raise DomainError("pixel_size must be positive")
        if not self.inner_potential > 0:
            raise DomainError("inner_potential must be positive")
        if not self.density_scale > 0:
            raise DomainError("density_scale must be positive")
        if not self.extent > 0:
            raise DomainError("extent must be positive")
        t.setflags(write=False)
        object.__setattr__(self, "thickness", t)

    @property
    def shape(self):
        return self.thickness.shape

    def rotated(self) -> Phantom:
        return replace(self, thickness=rotate90(self.thickness))

    def oriented(self, orientation: Orientation) -> np.ndarray:
        """Thickness map as seen in ``orientation``; Wrong is Right turned by 90 degrees."""
        if orientation is Orientation.RIGHT:
            return self.thickness
        return rotate90(self.thickness)

    def _meta(self):
        return {
            "inner_potential": repr(self.inner_potential),
            "density_scale": repr(self.density_scale),
            "extent": repr(self.extent),
        }

    def to_csv(self, path, meta=None) -> None:
        write_csv_grid(path, self.thickness, self.pixel_size, {**self._meta(), **(meta or {})})

    def to_pgm(self, path, meta=None) -> None:
        m = {"pixel_size": repr(self.pixel_size), **self._meta(), **(meta or {})}
        write_pgm(path, self.thickness, m)

    @classmethod
    def from_csv(cls, path) -> Phantom:
        t, px, meta = read_csv_grid(path)
        return cls(t, px, **_phantom_kwargs(meta))

    @classmethod
    def from_pgm(cls, path) -> Phantom:
        t, meta = read_pgm(path)
        return cls(t, float(meta["pixel_size"]), **_phantom_kwargs(meta))


def _phantom_kwargs(meta):
    return {k: float(meta[k]) for k in ("inner_potential", "density_scale", "extent") if k in meta}


def _default_mfp_rows():
    text = resources.files("lowdose").joinpath("data/imfp_carbon.csv").read_text()
    return _parse_mfp(text.splitlines())


def _parse_mfp(lines):
    rows = [ln for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.reader(rows)
    out = []
    for rec in reader:
        try:
            out.append((float(rec[0]), float(rec[1])))
        except ValueError:
            continue  # header
    return out


@dataclass(frozen=True, eq=False)
class AbsorptionModel:
    """Tabulated inelastic mean free path with log-log interpolation."""

    energies: np.ndarray = field(default_factory=lambda: np.array([e for e, _ in _default_mfp_rows()]))
    mean_free_paths: np.ndarray = field(default_factory=lambda: np.array([m for _, m in _default_mfp_rows()]))
    enabled: bool = True

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float)
        m = np.asarray(self.mean_free_paths, dtype=float)
        if e.ndim != 1 or e.shape != m.shape or e.size < 2:
            raise ShapeError("need at least two (energy, mean free path) pairs")
        if np.any(np.diff(e) <= 0):
            raise DomainError("table energies must be strictly increasing")
        if np.any(e <= 0) or np.any(m <= 0) or not np.all(np.isfinite(m)):
            raise DomainError("table energies and mean free paths must be positive")
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "mean_free_paths", m)

    @classmethod
    def from_csv(cls, path, enabled: bool = True) -> AbsorptionModel:
        with open(path) as fh:
            rows = _parse_mfp(fh.read().splitlines())
        return cls(np.array([r[0] for r in rows]), np.array([r[1] for r in rows]), enabled)

    @classmethod
    def disabled(cls) -> AbsorptionModel:
        return cls(enabled=False)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["energy_eV", "lambda_m"])
            for e, m in zip(self.energies, self.mean_free_paths):
                w.writerow([repr(float(e)), repr(float(m))])

    def mean_free_path(self, energy: float) -> float:
        if not (self.energies[0] <= energy <= self.energies[-1]):
            raise DomainError(
                f"energy {energy} eV outside the mean-free-path table "
                f"[{self.energies[0]}, {self.energies[-1]}]"
            )
        return float(np.exp(np.interp(np.log(energy), np.log(self.energies), np.log(self.mean_free_paths))))


def beam_illumination(shape, pixel_size: float, diameter: float, edge_width: float | None = None) -> ComplexField:
    """Unit-amplitude disk with a raised-cosine rim, centred on the optical axis.

    The amplitude is 1 inside ``diameter/2 - edge_width/2`` and 0 beyond
    ``diameter/2 + edge_width/2``.  ``edge_width`` defaults to a tenth of the
    diameter.
    """
    if not diameter > 0:
        raise DomainError("beam diameter must be positive")
    if edge_width is None:
        edge_width = 0.1 * diameter
    x = centered_coordinates(shape[0], pixel_size)
    y = centered_coordinates(shape[1], pixel_size)
    r = np.hypot(x[:, None], y[None, :])
    r_in = diameter / 2 - edge_width / 2
    if edge_width > 0:
        s = np.clip((r - r_in) / edge_width, 0.0, 1.0)
        amp = 0.5 * (1 + np.cos(np.pi * s))
    else:
        amp = (r <= diameter / 2).astype(float)
    return ComplexField(amp.astype(complex), pixel_size)


def exit_wave(
    incident: ComplexField,
    phantom: Phantom,
    orientation: Orientation,
    energy: float,
    absorption: AbsorptionModel | None = None,
) -> ComplexField:
    """Wave leaving the specimen for one orientation.

    ``incident * exp(1j*sigma*V0*density*t)``, times ``exp(-t/(2*mfp))`` when
    ``absorption`` is enabled.
    """
    if incident.shape != phantom.shape:
        raise ShapeError(f"incident grid {incident.shape} does not match phantom {phantom.shape}")
    if not math.isclose(incident.pixel_size, phantom.pixel_size, rel_tol=1e-9):
        raise ShapeError(f"pixel sizes differ: {incident.pixel_size} vs {phantom.pixel_size}")
    t = phantom.oriented(orientation)
    if np.any((t > 0) & (incident.values == 0)):
        raise GeometryError("illuminating beam does not cover the specimen support")
    phase = interaction_constant(energy) * phantom.inner_potential * phantom.density_scale * t
    transmission = np.exp(1j * phase)
    if absorption is not None and absorption.enabled:
        transmission = transmission * np.exp(-t / (2 * absorption.mean_free_path(energy)))
    return incident.multiply(transmission)


def generate_phantom(
    seed: int,
    extent: float = 25e-9,
    shape=(512, 512),
    pixel_size: float = 0.5e-9,
    peak_thickness: float = 25e-9,
    inner_potential: float = CARBON_INNER_POTENTIAL,
    density_scale: float = PROTEIN_DENSITY_SCALE,
) -> Phantom:
    """Smooth, chiral multi-lobed blob used in place of a real density map.

    Between three and six elongated Gaussian lobes are scattered over a disk
    of diameter ``extent``; their sum is tapered to zero at the disk rim and
    scaled so the thickest point equals ``peak_thickness``.
    """
    fov = min(shape) * pixel_size
    if extent > 0.75 * fov:
        raise GeometryError(
            f"phantom extent {extent:.3e} m leaves less than a 25% guard band in a "
            f"{fov:.3e} m field of view"
        )
    if not (extent > 0 and peak_thickness > 0):
        raise DomainError("extent and peak_thickness must be positive")
    rng = np.random.default_rng(seed)
    x = centered_coordinates(shape[0], pixel_size)[:, None]
    y = centered_coordinates(shape[1], pixel_size)[None, :]
    radius = extent / 2
    t = np.zeros(shape)
    for _ in range(rng.integers(3, 7)):
        # area-uniform centre inside 85% of the disk radius
        rc = radius * 0.85 * math.sqrt(rng.uniform())
        phi = rng.uniform(0, 2 * math.pi)
        cx, cy = rc * math.cos(phi), rc * math.sin(phi)
        major = rng.uniform(0.10, 0.25) * extent
        minor = major / rng.uniform(1.0, 3.0)
        tilt = rng.uniform(0, math.pi)
        dx, dy = x - cx, y - cy
        u = dx * math.cos(tilt) + dy * math.sin(tilt)
        v = -dx * math.sin(tilt) + dy * math.cos(tilt)
        t += rng.uniform(0.4, 1.0) * np.exp(-0.5 * ((u / major) ** 2 + (v / minor) ** 2))
    r = np.hypot(x, y)
    rim = 0.1 * radius
    taper = 0.5 * (1 + np.cos(np.pi * np.clip((r - (radius - rim)) / rim, 0.0, 1.0)))
    t *= taper
    t *= peak_thickness / t.max()
    return Phantom(t, pixel_size, inner_potential, density_scale, extent)
