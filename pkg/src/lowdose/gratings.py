"""Point-projection diffraction by arrays of holes.

A point source a short distance upstream of the mask illuminates one or two
hole-array gratings.  The mask is Fresnel-propagated to a distant screen and
the first-order diffraction angle is read off the screen profile.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .detection import ScreenDistribution
from .errors import DomainError, GeometryError, ParaxialError
from .field import (
    ComplexField,
    centered_coordinates,
    electron_wavelength,
    point_source_illumination,
    propagate_fresnel_scaled,
)

__all__ = [
    "GratingGrid",
    "GratingSpec",
    "OrderExtraction",
    "ProjectionGeometry",
    "build_grating_mask",
    "default_separation",
    "extract_first_order_angle",
    "grating_equation",
    "simulate_pattern",
    "sweep",
    "write_sweep_csv",
]

_MERGE_ENERGY = 90.0


def default_separation(energy: float = _MERGE_ENERGY, spacing: float = 100e-9,
                       source_to_element: float = 360e-6, source_to_screen: float = 0.1) -> float:
    """Centre distance of two gratings whose facing first orders coincide at ``energy``.

    The grating centres project onto the screen ``s * L / z0`` apart while
    each first order sits ``lambda * (L - z0) / a`` from its zeroth order, so
    the inner orders overlap when ``s = 2 * lambda * z0 * (L - z0) / (a * L)``.
    """
    wl = electron_wavelength(energy)
    z0, L = source_to_element, source_to_screen
    return 2 * wl * z0 * (L - z0) / (spacing * L)


@dataclass(frozen=True)
class GratingSpec:
    """Hole-array grating(s).

    Each grating is ``rows x cols`` holes of ``hole_diameter``; columns are
    ``slit_spacing`` apart along x (the dispersion axis) and rows ``pitch_y``
    apart along y (defaults to ``slit_spacing``).  With ``n_gratings=2`` two
    copies sit ``separation`` apart along x.
    """

    slit_spacing: float = 100e-9
    hole_diameter: float = 20e-9
    rows: int = 4
    cols: int = 4
    n_gratings: int = 1
    pitch_y: float | None = None
    separation: float = field(default_factory=default_separation)

    def __post_init__(self):
        if not (self.slit_spacing > 0 and self.hole_diameter > 0):
            raise DomainError("slit_spacing and hole_diameter must be positive")
        if self.hole_diameter >= self.slit_spacing:
            raise DomainError("hole_diameter must be smaller than slit_spacing")
        if self.rows < 0 or self.cols < 0:
            raise DomainError("hole counts must be non-negative")
        if self.n_gratings not in (1, 2):
            raise DomainError("n_gratings must be 1 or 2")
        if self.pitch_y is not None and self.pitch_y <= self.hole_diameter:
            raise DomainError("pitch_y must exceed hole_diameter")
        if self.n_gratings == 2 and self.separation <= (self.cols - 1) * self.slit_spacing + self.hole_diameter:
            raise DomainError("the two gratings overlap; increase separation")

    @property
    def y_pitch(self) -> float:
        return self.slit_spacing if self.pitch_y is None else self.pitch_y

    def grating_centres(self) -> list[float]:
        if self.n_gratings == 1:
            return [0.0]
        return [-self.separation / 2, self.separation / 2]

    def hole_centres(self) -> np.ndarray:
        xs = (np.arange(self.cols) - (self.cols - 1) / 2) * self.slit_spacing
        ys = (np.arange(self.rows) - (self.rows - 1) / 2) * self.y_pitch
        pts = [(g + x, y) for g in self.grating_centres() for x in xs for y in ys]
        return np.array(pts, dtype=float).reshape(-1, 2)


@dataclass(frozen=True)
class ProjectionGeometry:
    """Source-to-mask and source-to-screen distances; ``point_source=False`` uses plane illumination."""

    source_to_element: float = 360e-6
    source_to_screen: float = 0.1
    point_source: bool = True

    def __post_init__(self):
        if not 0 < self.source_to_element < self.source_to_screen:
            raise DomainError("need 0 < source_to_element < source_to_screen")

    @property
    def element_to_screen(self) -> float:
        return self.source_to_screen - self.source_to_element

    @property
    def magnification(self) -> float:
        """Projection of mask coordinates onto the screen (1 for plane illumination)."""
        return self.source_to_screen / self.source_to_element if self.point_source else 1.0


@dataclass(frozen=True)
class GratingGrid:
    n: int = 1024
    pixel_size: float = 2.5e-9


def build_grating_mask(spec: GratingSpec, grid: GratingGrid = GratingGrid()) -> np.ndarray:
    """Binary transmission: 1 inside holes, 0 in the film."""
    if spec.hole_diameter < 4 * grid.pixel_size:
        raise GeometryError(
            f"grid pitch {grid.pixel_size:.3g} m resolves the {spec.hole_diameter:.3g} m holes "
            "with fewer than 4 pixels"
        )
    centres = spec.hole_centres()
    half = grid.n * grid.pixel_size / 2
    r = spec.hole_diameter / 2
    if centres.size and np.any(np.abs(centres) + r > half):
        raise GeometryError("grating does not fit inside the simulation grid")
    x = centered_coordinates(grid.n, grid.pixel_size)
    mask = np.zeros((grid.n, grid.n))
    for cx, cy in centres:
        mask[np.hypot(x[:, None] - cx, x[None, :] - cy) <= r] = 1.0
    return mask


def grating_equation(wavelength: float, spacing: float) -> float:
    """First-order plane-wave angle ``lambda / a`` in radians."""
    if not (wavelength > 0 and spacing > 0):
        raise DomainError("wavelength and spacing must be positive")
    if wavelength >= spacing:
        raise ParaxialError(f"wavelength {wavelength:.3g} m is not small against spacing {spacing:.3g} m")
    return wavelength / spacing


def simulate_pattern(spec: GratingSpec, geometry: ProjectionGeometry, energy: float,
                     grid: GratingGrid = GratingGrid()) -> ScreenDistribution:
    """Screen intensity behind the mask for spherical (or plane) illumination."""
    wl = electron_wavelength(energy)
    grating_equation(wl, spec.slit_spacing)
    mask = build_grating_mask(spec, grid)
    if geometry.point_source:
        ill = point_source_illumination(mask.shape, grid.pixel_size, geometry.source_to_element, wl)
    else:
        ill = ComplexField.plane_wave(mask.shape, grid.pixel_size)
    z = geometry.element_to_screen
    limit = grid.n * grid.pixel_size**2 / wl
    if z < limit:
        raise GeometryError(f"mask-to-screen distance {z:.3g} m is below the sampling limit {limit:.3g} m")
    screen = propagate_fresnel_scaled(ill.multiply(mask), z, wl)
    return ScreenDistribution(screen.intensity, screen.pixel_size)


@dataclass(frozen=True)
class OrderExtraction:
    """Result of the first-order search.

    ``angle`` is in radians; ``None`` when the orders merged.  ``peaks`` lists
    the sub-pixel profile positions (pixels) of (-1, 0, +1) per grating.
    """

    angle: float | None
    merged: bool
    period_pixels: float
    peaks: tuple[tuple[float, float, float], ...] = ()

    @property
    def angle_mrad(self) -> float | None:
        return None if self.angle is None else self.angle * 1e3


def _autocorrelation_period(profile: np.ndarray) -> float:
    """Lag of the first autocorrelation maximum past the zero-lag lobe (parabolic refinement)."""
    q = profile - profile.mean()
    spec = np.fft.rfft(q, 2 * q.size)
    ac = np.fft.irfft(np.abs(spec) ** 2)[: q.size]
    k = 1
    while k < q.size // 2 and ac[k + 1] < ac[k]:
        k += 1
    if k >= q.size // 2 - 1:
        return math.nan
    j = k + int(np.argmax(ac[k: q.size // 2]))
    y0, y1, y2 = ac[j - 1], ac[j], ac[j + 1]
    den = y0 - 2 * y1 + y2
    return j + (0.5 * (y0 - y2) / den if den != 0 else 0.0)


def _centroid(profile: np.ndarray, k: int, half: int = 2) -> float:
    idx = np.arange(k - half, k + half + 1)
    w = profile[idx % profile.size]
    return float((idx * w).sum() / w.sum()) if w.sum() > 0 else float(k)


def extract_first_order_angle(dist: ScreenDistribution, geometry: ProjectionGeometry,
                              spec: GratingSpec | None = None) -> OrderExtraction:
    """Angle between zeroth and first orders, measured from the mask plane.

    The intensity is summed across y to a profile along x.  The order spacing
    is estimated from the profile's autocorrelation.  Around the projected
    centre of each grating the nearest peak is taken as the zeroth order and
    the peaks nearest one spacing to either side as the first orders.  The
    angle is half the +1/-1 distance divided by the mask-to-screen distance.
    Fewer than three peaks, or two gratings sharing an inner first-order
    peak, give a merged result.
    """
    profile = np.asarray(dist.intensity, dtype=float).sum(axis=1)
    n = profile.size
    centres = (spec or GratingSpec()).grating_centres()
    peaks, _ = find_peaks(profile, prominence=0.05 * profile.max()) if profile.max() > 0 else (np.array([], int), None)
    period = _autocorrelation_period(profile)
    if peaks.size < 3 or not math.isfinite(period):
        return OrderExtraction(None, True, period)
    found = []
    idx_sets = []
    for c in centres:
        c0 = n // 2 + c * geometry.magnification / dist.pixel_size
        k0 = int(peaks[np.argmin(np.abs(peaks - c0))])
        x0 = _centroid(profile, k0)
        kp = int(peaks[np.argmin(np.abs(peaks - (x0 + period)))])
        km = int(peaks[np.argmin(np.abs(peaks - (x0 - period)))])
        if len({km, k0, kp}) < 3:
            return OrderExtraction(None, True, period)
        found.append((_centroid(profile, km), x0, _centroid(profile, kp)))
        idx_sets.append((km, k0, kp))
    if len(idx_sets) == 2 and idx_sets[0][2] >= idx_sets[1][0]:
        return OrderExtraction(None, True, period, tuple(found))
    seps = [(p - m) / 2 * dist.pixel_size for m, _, p in found]
    angle = float(np.mean(seps)) / geometry.element_to_screen
    return OrderExtraction(angle, False, period, tuple(found))


def _one(args):
    spec, geometry, energy, grid = args
    dist = simulate_pattern(spec, geometry, energy, grid)
    return dist, extract_first_order_angle(dist, geometry, spec)


def sweep(spec: GratingSpec, geometry: ProjectionGeometry, energies, grid: GratingGrid = GratingGrid(), threads: int = 1):
    """Simulate and extract at each energy; returns a list of (energy, dist, extraction)."""
    jobs = [(spec, geometry, float(e), grid) for e in energies]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(_one, jobs))
    else:
        out = [_one(j) for j in jobs]
    return [(j[2], d, x) for j, (d, x) in zip(jobs, out)]


def write_sweep_csv(path, rows, comment_lines=()) -> None:
    """CSV with energy_eV, wavelength_m, angle_mrad, merged_flag."""
    with open(path, "w", newline="") as fh:
        for line in comment_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["energy_eV", "wavelength_m", "angle_mrad", "merged_flag"])
        for energy, _, ext in rows:
            ang = "" if ext.angle is None else repr(ext.angle_mrad)
            w.writerow([repr(float(energy)), repr(float(electron_wavelength(energy))), ang, int(ext.merged)])
