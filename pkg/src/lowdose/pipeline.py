"""End-to-end assembly of the two-orientation experiment from a resolved config."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import Experiment
from .detection import ScreenDistribution, design_element, object_wave, screen_distribution, spot_window
from .doe import DiffractiveElement, binarize, expand, pixelate, synthesize_continuous
from .hypothesis import HypothesisPair
from .specimen import Orientation, Phantom, generate_phantom

__all__ = ["Setup", "build_phantom", "build_setup"]


@dataclass(frozen=True)
class Setup:
    phantom: Phantom
    continuous: DiffractiveElement
    element: DiffractiveElement
    fabricated: DiffractiveElement
    right: ScreenDistribution
    wrong: ScreenDistribution
    window: np.ndarray

    def pair(self, prior_right: float = 0.5, floor_factor: float = 1e-3) -> HypothesisPair:
        return HypothesisPair(self.right, self.wrong, prior_right, floor_factor)


def build_phantom(exp: Experiment) -> Phantom:
    p = exp.config["phantom"]
    if p["path"] is not None:
        path = str(p["path"])
        ph = Phantom.from_pgm(path) if path.lower().endswith(".pgm") else Phantom.from_csv(path)
        return ph
    return generate_phantom(
        p["seed"],
        extent=p["extent"],
        shape=exp.geometry.shape,
        pixel_size=exp.geometry.specimen_pixel,
        peak_thickness=p["peak_thickness"],
        inner_potential=p["inner_potential"],
        density_scale=p["density_scale"],
    )


def build_setup(exp: Experiment, phantom: Phantom | None = None) -> Setup:
    """Phantom, Right-designed element and both screen distributions."""
    ph = build_phantom(exp) if phantom is None else phantom
    s = exp.config["synthesis"]
    binary = s["kind"] == "binary"
    if s["target"] == "identity":
        _, _, psi_o = object_wave(ph, Orientation.RIGHT, exp.energy, exp.geometry, exp.absorption)
        cont = synthesize_continuous(psi_o, psi_o, exp.synthesis)
        used = binarize(cont, exp.synthesis.binarize_threshold) if binary else cont
    else:
        cont, used = design_element(ph, exp.energy, exp.geometry, exp.synthesis, binary, exp.absorption)
    fab = used
    if s["fabrication_pixel"] is not None:
        fab = pixelate(used, s["fabrication_pixel"])
        used = expand(fab, int(round(fab.pixel_size / used.pixel_size)))
    right = screen_distribution(ph, Orientation.RIGHT, used, exp.geometry, exp.energy, exp.absorption)
    wrong = screen_distribution(ph, Orientation.WRONG, used, exp.geometry, exp.energy, exp.absorption)
    window = spot_window(right.shape, exp.geometry.focus_index())
    return Setup(ph, cont, used, fab, right, wrong, window)
