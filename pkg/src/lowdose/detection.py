"""Forward chain specimen -> element -> screen, and single-electron sampling.

The chain uses two single-transform Fresnel hops.  The first hop takes the
exit wave on the specimen grid to the element plane, with its distance chosen
so the element-plane pitch equals the fabrication pixel.  The second hop
reaches the screen.  Every electron ends in one of three channels: absorbed
in the specimen, absorbed in the element, or detected on a screen pixel.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass

import numpy as np

from .doe import DiffractiveElement, SynthesisParams, apply, binarize, synthesize_continuous, target_wave
from .errors import DomainError, GeometryError, ShapeError
from .field import ComplexField, electron_wavelength, fresnel_sampling_limit, propagate_fresnel_scaled
from .imageio import write_csv_grid, write_pgm
from .specimen import AbsorptionModel, Orientation, Phantom, beam_illumination, exit_wave

__all__ = [
    "ChainGeometry",
    "DetectionEvent",
    "Outcome",
    "ScreenDistribution",
    "design_element",
    "object_wave",
    "sample_event",
    "sample_events",
    "screen_distribution",
    "spot_window",
    "write_event_log",
]


@dataclass(frozen=True)
class ChainGeometry:
    """Sampling and distances of the specimen -> element -> screen chain.

    Attributes
    ----------
    n : grid points per side, shared by all three planes.
    specimen_pixel : pitch of the specimen grid (m).
    element_pixel : pitch of the element grid, i.e. the fabrication pixel (m).
    screen_distance : element to screen (m).
    focus_offset : lateral focus position in units of the screen field of
        view along x.  The default 0.25 keeps the spot clear of the
        undiffracted shadow at the centre.
    beam_diameter_factor : beam disk diameter relative to the phantom extent.
    """

    n: int = 512
    specimen_pixel: float = 0.5e-9
    element_pixel: float = 40e-9
    screen_distance: float = 0.1
    focus_offset: float = 0.25
    beam_diameter_factor: float = 1.2

    def __post_init__(self):
        if self.n < 8:
            raise DomainError(f"grid must have at least 8 points per side, got {self.n}")
        for name in ("specimen_pixel", "element_pixel", "screen_distance"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if not -0.5 <= self.focus_offset < 0.5:
            raise GeometryError("focus_offset must lie within the screen field of view")
        if self.element_pixel < self.specimen_pixel:
            raise GeometryError(
                "element pixel finer than the specimen pixel undersamples the first Fresnel hop"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    def specimen_to_element(self, wavelength: float) -> float:
        """Distance that maps the specimen pitch onto the element pitch."""
        return self.element_pixel * self.n * self.specimen_pixel / wavelength

    def screen_pixel(self, wavelength: float) -> float:
        return wavelength * self.screen_distance / (self.n * self.element_pixel)

    def focus_index(self) -> tuple[int, int]:
        return (self.n // 2 + int(round(self.focus_offset * self.n)), self.n // 2)

    def focus_position(self, wavelength: float) -> tuple[float, float]:
        i, j = self.focus_index()
        p = self.screen_pixel(wavelength)
        return ((i - self.n // 2) * p, (j - self.n // 2) * p)

    def validate(self, wavelength: float) -> None:
        """Raise GeometryError if either Fresnel hop undersamples its chirp."""
        z2_min = fresnel_sampling_limit(self.n, self.element_pixel, wavelength)
        if self.screen_distance < z2_min:
            raise GeometryError(
                f"screen distance {self.screen_distance:.4g} m is below the sampling limit "
                f"{z2_min:.4g} m for {self.n} element pixels of {self.element_pixel:.3g} m"
            )


def _incident(phantom: Phantom, geometry: ChainGeometry) -> ComplexField:
    if phantom.shape != geometry.shape:
        raise ShapeError(f"phantom grid {phantom.shape} does not match chain grid {geometry.shape}")
    if not math.isclose(phantom.pixel_size, geometry.specimen_pixel, rel_tol=1e-9):
        raise ShapeError("phantom pixel size differs from the chain's specimen pixel")
    return beam_illumination(geometry.shape, geometry.specimen_pixel, geometry.beam_diameter_factor * phantom.extent)


def object_wave(
    phantom: Phantom,
    orientation: Orientation,
    energy: float,
    geometry: ChainGeometry,
    absorption: AbsorptionModel | None = None,
) -> tuple[ComplexField, ComplexField, ComplexField]:
    """Incident wave, exit wave and object wave at the element plane."""
    wl = electron_wavelength(energy)
    geometry.validate(wl)
    inc = _incident(phantom, geometry)
    ex = exit_wave(inc, phantom, orientation, energy, absorption)
    psi_o = propagate_fresnel_scaled(ex, geometry.specimen_to_element(wl), wl)
    # the hop lands on the element pitch up to rounding; pin it exactly
    return inc, ex, ComplexField(psi_o.values, geometry.element_pixel)


def design_element(
    phantom: Phantom,
    energy: float,
    geometry: ChainGeometry,
    params: SynthesisParams = SynthesisParams(),
    binary: bool = True,
    absorption: AbsorptionModel | None = None,
) -> tuple[DiffractiveElement, DiffractiveElement]:
    """Synthesise the element for the Right orientation.

    Returns ``(continuous, used)`` where ``used`` is the binarised element when
    ``binary`` is true and the continuous one otherwise.
    """
    wl = electron_wavelength(energy)
    _, _, psi_o = object_wave(phantom, Orientation.RIGHT, energy, geometry, absorption)
    psi_s = target_wave(psi_o.shape, psi_o.pixel_size, geometry.screen_distance, wl, geometry.focus_position(wl))
    cont = synthesize_continuous(psi_o, psi_s, params)
    used = binarize(cont, params.binarize_threshold) if binary else cont
    return cont, used


class ScreenDistribution:
    """Screen intensity of one hypothesis together with its channel probabilities.

    Parameters
    ----------
    intensity : non-negative screen intensity map.
    pixel_size : screen pitch (m).
    t_specimen : fraction of incident electrons leaving the specimen.
    t_element : fraction of those transmitted by the element.

    ``detect_prob`` (T) is ``t_specimen * t_element``.  ``pmf`` is the per-pixel
    probability given detection and ``cdf`` its flattened running sum.
    """

    def __init__(self, intensity, pixel_size: float, t_specimen: float = 1.0, t_element: float = 1.0):
        inten = np.array(intensity, dtype=float, copy=True)
        if inten.ndim != 2:
            raise ShapeError("screen intensity must be 2D")
        if not np.all(np.isfinite(inten)) or inten.min() < 0:
            raise DomainError("screen intensity must be finite and non-negative")
        for name, v in (("t_specimen", t_specimen), ("t_element", t_element)):
            if not 0 <= v <= 1:
                raise DomainError(f"{name} must lie in [0, 1], got {v}")
        total = inten.sum()
        self.intensity = inten
        self.pixel_size = float(pixel_size)
        self.t_specimen = float(t_specimen)
        self.t_element = float(t_element)
        if total > 0:
            self.pmf = inten / total
        else:
            # nothing reaches the screen; keep a valid uniform pmf for bookkeeping
            self.pmf = np.full(inten.shape, 1.0 / inten.size)
            self.t_element = 0.0
        self.cdf = np.cumsum(self.pmf.ravel())
        for a in (self.intensity, self.pmf, self.cdf):
            a.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.intensity.shape

    @property
    def detect_prob(self) -> float:
        return self.t_specimen * self.t_element

    def window_mass(self, mask: np.ndarray) -> float:
        return float(self.pmf[mask].sum())

    def gain(self, mask: np.ndarray) -> float:
        """Peak intensity inside ``mask`` over the mean screen intensity."""
        return float(self.intensity[mask].max() / self.intensity.mean())

    def to_pgm(self, path, meta=None) -> None:
        write_pgm(path, self.intensity, {"pixel_size": repr(self.pixel_size), **(meta or {})})

    def to_csv(self, path, meta=None) -> None:
        write_csv_grid(path, self.intensity, self.pixel_size, meta)


def screen_distribution(
    phantom: Phantom,
    orientation: Orientation,
    element: DiffractiveElement,
    geometry: ChainGeometry,
    energy: float,
    absorption: AbsorptionModel | None = None,
) -> ScreenDistribution:
    """Screen intensity for one orientation seen through ``element``."""
    wl = electron_wavelength(energy)
    inc, ex, psi_o = object_wave(phantom, orientation, energy, geometry, absorption)
    behind = apply(psi_o, element)
    screen = propagate_fresnel_scaled(behind, geometry.screen_distance, wl)
    # a pure phase object transmits everything; avoid rounding noise in that case
    absorbing = absorption is not None and absorption.enabled
    t_spec = ex.total_intensity / inc.total_intensity if absorbing else 1.0
    before = psi_o.total_intensity
    t_el = behind.total_intensity / before if before > 0 else 0.0
    return ScreenDistribution(screen.intensity, screen.pixel_size, min(t_spec, 1.0), min(t_el, 1.0))


def spot_window(shape, center, radius: float = 3.0) -> np.ndarray:
    """Boolean disk of ``radius`` pixels around ``center``."""
    i = np.arange(shape[0])[:, None] - center[0]
    j = np.arange(shape[1])[None, :] - center[1]
    return i**2 + j**2 <= radius**2


class Outcome(enum.Enum):
    DETECTED = "detected"
    ABSORBED_SPECIMEN = "absorbed_specimen"
    ABSORBED_ELEMENT = "absorbed_element"

    @property
    def absorbed(self) -> bool:
        return self is not Outcome.DETECTED


@dataclass(frozen=True)
class DetectionEvent:
    """Fate of one incident electron; ``pixel`` is None unless detected."""

    outcome: Outcome
    pixel: tuple[int, int] | None = None


def _decode(dist: ScreenDistribution, u: np.ndarray):
    """Map uniform pairs to (outcome code, flat pixel index).

    Codes: 0 detected, 1 absorbed in the element, 2 absorbed in the specimen.
    """
    t = dist.detect_prob
    ts = dist.t_specimen
    code = np.where(u[:, 0] < t, 0, np.where(u[:, 0] < ts, 1, 2))
    flat = np.searchsorted(dist.cdf, u[:, 1] * dist.cdf[-1], side="right")
    flat = np.minimum(flat, dist.cdf.size - 1)
    return code, flat


_CODES = (Outcome.DETECTED, Outcome.ABSORBED_ELEMENT, Outcome.ABSORBED_SPECIMEN)


def sample_events(dist: ScreenDistribution, rng: np.random.Generator, n: int):
    """Draw ``n`` events at once.

    Returns ``(codes, ix, iy)`` arrays with codes 0 detected, 1 absorbed in the
    element, 2 absorbed in the specimen; pixel indices are -1 when absorbed.
    Consumes the generator exactly like ``n`` calls of :func:`sample_event`.
    """
    u = rng.random((n, 2))
    code, flat = _decode(dist, u)
    ix, iy = np.divmod(flat, dist.shape[1])
    ix = np.where(code == 0, ix, -1)
    iy = np.where(code == 0, iy, -1)
    return code, ix, iy


def sample_event(dist: ScreenDistribution, rng: np.random.Generator) -> DetectionEvent:
    """Draw the fate of one incident electron."""
    code, ix, iy = sample_events(dist, rng, 1)
    outcome = _CODES[int(code[0])]
    if outcome is Outcome.DETECTED:
        return DetectionEvent(outcome, (int(ix[0]), int(iy[0])))
    return DetectionEvent(outcome)


def write_event_log(path, rows, comment_lines=()) -> None:
    """CSV of events: trial, event_index, outcome, x, y, posterior.

    ``rows`` yields tuples in that order; x and y are screen pixel indices,
    left empty for absorbed electrons.
    """
    with open(path, "w", newline="") as fh:
        for line in comment_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["trial", "event_index", "outcome", "x", "y", "posterior"])
        for trial, k, outcome, x, y, post in rows:
            w.writerow([trial, k, outcome, "" if x < 0 else x, "" if y < 0 else y, repr(float(post))])
