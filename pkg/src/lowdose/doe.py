"""Amplitude-only diffractive element that turns an object wave into a focus.

Synthesis follows ``d = Re(psi_s / psi_o) + const``: the complex ratio that
would map the hypothesised object wave onto a converging wave is reduced to
its real part, lifted by the smallest constant that makes it non-negative and
scaled into [0, 1].  Pixels where the object wave is too weak to divide by
are made opaque.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, GeometryError, ShapeError, SynthesisError
from .field import ComplexField, centered_coordinates
from .imageio import write_pbm, write_pgm

__all__ = [
    "CONTINUOUS",
    "BINARY",
    "DiffractiveElement",
    "SynthesisParams",
    "apply",
    "binarize",
    "expand",
    "offset_ratio_map",
    "pixelate",
    "synthesize_continuous",
    "target_wave",
]

CONTINUOUS = "continuous"
BINARY = "binary"


@dataclass(frozen=True)
class SynthesisParams:
    """Knobs of the element synthesis.

    ``intensity_threshold`` is the fraction of peak ``|psi_o|**2`` below which
    the element is opaque.  ``offset`` is ``"minimal"`` (smallest constant
    making the kept region non-negative) or a fixed number.  ``binarize_threshold``
    is ``"median"`` of the kept-region values or a fixed cut in [0, 1].
    """

    intensity_threshold: float = 1e-4
    offset: str | float = "minimal"
    binarize_threshold: str | float = "median"

    def __post_init__(self):
        if not 0 <= self.intensity_threshold < 1:
            raise DomainError(f"intensity_threshold must be in [0, 1), got {self.intensity_threshold}")
        if isinstance(self.offset, str) and self.offset != "minimal":
            raise DomainError(f"unknown offset policy {self.offset!r}")
        if isinstance(self.binarize_threshold, str) and self.binarize_threshold != "median":
            raise DomainError(f"unknown binarize policy {self.binarize_threshold!r}")


@dataclass(frozen=True, eq=False)
class DiffractiveElement:
    """Real transmission map in [0, 1] on its own grid.

    ``support`` marks pixels where the object wave was strong enough to be
    used; everything outside it is opaque.
    """

    transmission: np.ndarray
    pixel_size: float
    kind: str = CONTINUOUS
    support: np.ndarray | None = None

    def __post_init__(self):
        d = np.array(self.transmission, dtype=float, copy=True)
        if d.ndim != 2:
            raise ShapeError(f"transmission must be 2D, got {d.shape}")
        if not np.all(np.isfinite(d)) or d.min() < 0 or d.max() > 1:
            raise DomainError("transmission must be finite and within [0, 1]")
        if self.kind not in (CONTINUOUS, BINARY):
            raise DomainError(f"unknown element kind {self.kind!r}")
        if self.kind == BINARY and not np.all((d == 0) | (d == 1)):
            raise DomainError("binary element may only contain 0 and 1")
        if not self.pixel_size > 0:
            raise DomainError("pixel_size must be positive")
        s = np.ones(d.shape, bool) if self.support is None else np.array(self.support, dtype=bool)
        if s.shape != d.shape:
            raise ShapeError("support mask shape differs from transmission")
        d.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "transmission", d)
        object.__setattr__(self, "support", s)

    @property
    def shape(self):
        return self.transmission.shape

    @property
    def open_fraction(self) -> float:
        return float(self.transmission.mean())

    def to_pgm(self, path, meta=None) -> None:
        write_pgm(path, self.transmission, {"pixel_size": repr(self.pixel_size), **(meta or {})}, scale=1 / 65535)

    def to_pbm(self, path, meta=None) -> None:
        if self.kind != BINARY:
            raise DomainError("only binary elements can be written as PBM")
        write_pbm(path, self.transmission.astype(np.uint8), {"pixel_size": repr(self.pixel_size), **(meta or {})})

    def holes(self) -> np.ndarray:
        """Centres ``(x, y)`` in metres of every open pixel of a binary element."""
        if self.kind != BINARY:
            raise DomainError("hole list is defined for binary elements only")
        ix, iy = np.nonzero(self.transmission)
        x = centered_coordinates(self.shape[0], self.pixel_size)[ix]
        y = centered_coordinates(self.shape[1], self.pixel_size)[iy]
        return np.column_stack([x, y])

    def write_hole_csv(self, path, comment_lines=()) -> None:
        with open(path, "w", newline="") as fh:
            for line in comment_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["x", "y", "pixel_size"])
            px = repr(self.pixel_size)
            for x, y in self.holes():
                w.writerow([repr(float(x)), repr(float(y)), px])


def _same_grid(a: ComplexField, b, what: str):
    if a.shape != b.shape:
        raise ShapeError(f"{what}: grid shapes differ, {a.shape} vs {b.shape}")
    if not math.isclose(a.pixel_size, b.pixel_size, rel_tol=1e-9):
        raise ShapeError(f"{what}: pixel sizes differ, {a.pixel_size} vs {b.pixel_size}")


def target_wave(shape, pixel_size: float, screen_distance: float, wavelength: float, focus=(0.0, 0.0)) -> ComplexField:
    """Unit-amplitude paraxial wave converging to ``focus`` on a screen ``screen_distance`` downstream.

    ``focus`` is the lateral focal position in metres.  Propagating the result
    with :func:`~lowdose.field.propagate_fresnel_scaled` puts the focus on a
    screen pixel whenever ``focus`` is a multiple of the screen pitch.
    """
    if not screen_distance > 0:
        raise DomainError("screen_distance must be positive")
    n = np.asarray(shape)
    screen_px = wavelength * screen_distance / (n * pixel_size)
    lo = -(n // 2) * screen_px
    hi = (n - n // 2 - 1) * screen_px
    f = np.asarray(focus, dtype=float)
    if np.any(f < lo) or np.any(f > hi):
        raise GeometryError(f"focus {tuple(f)} lies outside the screen field [{tuple(lo)}, {tuple(hi)}]")
    x = centered_coordinates(shape[0], pixel_size)[:, None]
    y = centered_coordinates(shape[1], pixel_size)[None, :]
    phase = -np.pi * ((x - f[0]) ** 2 + (y - f[1]) ** 2) / (wavelength * screen_distance)
    return ComplexField(np.exp(1j * phase), pixel_size)


def offset_ratio_map(psi_o: ComplexField, psi_s: ComplexField, params: SynthesisParams = SynthesisParams()):
    """``Re(psi_s/psi_o) + const`` before rescaling, and the kept-pixel mask.

    Returns ``(d_raw, keep)`` with ``d_raw`` zero outside ``keep``.
    """
    _same_grid(psi_o, psi_s, "synthesis")
    o_re, o_im = psi_o.values.real, psi_o.values.imag
    s_re, s_im = psi_s.values.real, psi_s.values.imag
    # Re(s/o) = Re(s*conj(o)) / |o|^2 from plain real products, so that
    # s = o and s = 1j*o give exactly 1 and 0
    inten = o_re * o_re + o_im * o_im
    peak = inten.max()
    if peak == 0:
        raise SynthesisError("object wave is identically zero")
    keep = inten >= params.intensity_threshold * peak
    ratio = np.zeros(psi_o.shape)
    num = s_re * o_re + s_im * o_im
    ratio[keep] = num[keep] / inten[keep]
    if params.offset == "minimal":
        low = ratio[keep].min()
        const = -low if low < 0 else 0.0
    else:
        const = float(params.offset)
    d_raw = np.where(keep, ratio + const, 0.0)
    if d_raw[keep].min() < 0:
        raise SynthesisError(f"offset {const} leaves negative transmission")
    return d_raw, keep


def synthesize_continuous(psi_o: ComplexField, psi_s: ComplexField, params: SynthesisParams = SynthesisParams()) -> DiffractiveElement:
    """Continuous element from the object and target waves at the element plane.

    When the kept region carries no modulation at all (for example a purely
    imaginary ratio), it is made uniformly transparent.
    """
    d_raw, keep = offset_ratio_map(psi_o, psi_s, params)
    peak = d_raw.max()
    d = d_raw / peak if peak > 0 else keep.astype(float)
    return DiffractiveElement(d, psi_o.pixel_size, CONTINUOUS, keep)


def binarize(d: DiffractiveElement, threshold: str | float = "median") -> DiffractiveElement:
    """Open every kept pixel whose value is at or above the threshold."""
    if d.kind != CONTINUOUS:
        raise DomainError("binarize expects a continuous element")
    kept = d.transmission[d.support]
    if threshold == "median":
        cut = float(np.median(kept)) if kept.size else 1.0
    else:
        cut = float(threshold)
    out = (d.transmission >= cut) & d.support
    return DiffractiveElement(out.astype(float), d.pixel_size, BINARY, d.support)


def _integer_ratio(target: float, native: float) -> int:
    r = target / native
    k = int(round(r))
    if k < 1 or abs(r - k) > 1e-6 * r:
        raise GeometryError(f"target pixel {target:.4e} m is not an integer multiple of {native:.4e} m")
    return k


def pixelate(d: DiffractiveElement, target_pixel: float) -> DiffractiveElement:
    """Aggregate k x k blocks into fabrication pixels of size ``target_pixel``.

    Binary elements use a strict majority vote (ties close the pixel);
    continuous ones use the block mean.
    """
    k = _integer_ratio(target_pixel, d.pixel_size)
    if k == 1:
        return d
    nx, ny = d.shape
    if nx % k or ny % k:
        raise GeometryError(f"grid {d.shape} is not divisible into {k}x{k} blocks")
    blocks = d.transmission.reshape(nx // k, k, ny // k, k)
    support = d.support.reshape(nx // k, k, ny // k, k).any(axis=(1, 3))
    if d.kind == BINARY:
        votes = blocks.sum(axis=(1, 3))
        out = (votes > k * k / 2).astype(float)
    else:
        out = blocks.mean(axis=(1, 3))
    return DiffractiveElement(out, d.pixel_size * k, d.kind, support)


def expand(d: DiffractiveElement, factor: int) -> DiffractiveElement:
    """Resample onto a grid ``factor`` times finer by pixel replication."""
    if factor == 1:
        return d
    ones = np.ones((factor, factor))
    return DiffractiveElement(
        np.kron(d.transmission, ones), d.pixel_size / factor, d.kind, np.kron(d.support, ones).astype(bool)
    )


def apply(psi: ComplexField, d: DiffractiveElement) -> ComplexField:
    """Wave just behind the element: ``psi * d``."""
    _same_grid(psi, d, "apply")
    return psi.multiply(d.transmission)
