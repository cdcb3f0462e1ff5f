"""Experiment configuration: YAML in, fully resolved and validated dict out.

Every key has a default, so an empty file (or no file) is a valid
configuration.  The resolved dictionary is hashed (SHA-256 of its canonical
JSON form) and the hash is stamped into every output file.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import yaml

from .detection import ChainGeometry
from .doe import SynthesisParams
from .errors import ConfigError, LowdoseError
from .field import electron_wavelength
from .gratings import GratingGrid, GratingSpec, ProjectionGeometry, default_separation, grating_equation
from .hypothesis import Mode
from .specimen import CARBON_INNER_POTENTIAL, PROTEIN_DENSITY_SCALE, AbsorptionModel

__all__ = ["DEFAULTS", "Experiment", "config_hash", "load_config", "resolve"]

DEFAULTS: dict = {
    "beam": {
        # 15 keV is the low-energy case of the element study
        "energy": 15000.0,
    },
    "grid": {
        "n": 512,
        "specimen_pixel": 0.5e-9,
        # fabrication pitch at 15 keV; 20e-9 is the usual choice at 100 keV
        "element_pixel": 40e-9,
    },
    "distances": {
        # derived from the two pitches when null; if given it must agree
        "specimen_to_element": None,
        "element_to_screen": 0.1,
        "focus_offset": 0.25,
        "beam_diameter_factor": 1.2,
    },
    "phantom": {
        "seed": 1,
        "extent": 25e-9,
        "peak_thickness": 25e-9,
        "inner_potential": CARBON_INNER_POTENTIAL,
        "density_scale": PROTEIN_DENSITY_SCALE,
        # CSV or PGM thickness map written by this package; overrides the generator
        "path": None,
    },
    "synthesis": {
        "intensity_threshold": 1e-4,
        "offset": "minimal",
        "binarize_threshold": "median",
        "kind": "binary",
        # coarser fabrication pixel (integer multiple of grid.element_pixel) or null
        "fabrication_pixel": None,
        # "focus" designs a converging wave; "identity" targets the object wave itself
        "target": "focus",
    },
    "absorption": {
        "enabled": False,
        # energy_eV,lambda_m table; null uses the bundled amorphous-carbon table
        "table": None,
    },
    "stats": {
        "confidence": 0.95,
        "n_trials": 500,
        "max_incident": 100000,
        "mode": Mode.DETECTIONS_ONLY.value,
        "seed": 0,
        "prior_right": 0.5,
        "floor_factor": 1e-3,
    },
    "grating": {
        "energies": [89.0, 105.0, 125.0, 149.0, 200.0, 282.0],
        "slit_spacing": 100e-9,
        "hole_diameter": 20e-9,
        "rows": 4,
        "cols": 4,
        "n_gratings": 1,
        "pitch_y": None,
        # null places the two gratings so their facing first orders meet at 90 eV
        "separation": None,
        "source_to_element": 360e-6,
        "source_to_screen": 0.1,
        "point_source": True,
        "grid_n": 1024,
        "grid_pixel": 2.5e-9,
    },
}


def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        path = f"{where}.{key}" if where else key
        if key not in base:
            raise ConfigError(f"unknown configuration key {path!r}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{path!r} must be a mapping")
            out[key] = _merge(base[key], val, path)
        else:
            out[key] = val
    return out


def load_config(path: str | Path | None) -> dict:
    """Read a YAML file (or nothing) and merge it over :data:`DEFAULTS`."""
    if path is None:
        return copy.deepcopy(DEFAULTS)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    return _merge(DEFAULTS, data)


def _num(cfg, section, key, kind=float, allow_none=False):
    val = cfg[section][key]
    if val is None and allow_none:
        return None
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{section}.{key} must be a number, got {val!r}")
    if kind is int:
        if float(val) != int(val):
            raise ConfigError(f"{section}.{key} must be an integer, got {val!r}")
        return int(val)
    val = float(val)
    if not math.isfinite(val):
        raise ConfigError(f"{section}.{key} must be finite")
    return val


def _normalize(cfg: dict) -> dict:
    """Coerce types so that equivalent files hash identically."""
    c = copy.deepcopy(cfg)
    c["beam"]["energy"] = _num(cfg, "beam", "energy")
    c["grid"]["n"] = _num(cfg, "grid", "n", int)
    for k in ("specimen_pixel", "element_pixel"):
        c["grid"][k] = _num(cfg, "grid", k)
    c["distances"]["specimen_to_element"] = _num(cfg, "distances", "specimen_to_element", allow_none=True)
    for k in ("element_to_screen", "focus_offset", "beam_diameter_factor"):
        c["distances"][k] = _num(cfg, "distances", k)
    c["phantom"]["seed"] = _num(cfg, "phantom", "seed", int)
    for k in ("extent", "peak_thickness", "inner_potential", "density_scale"):
        c["phantom"][k] = _num(cfg, "phantom", k)
    if c["phantom"]["path"] is not None:
        c["phantom"]["path"] = str(c["phantom"]["path"])
    c["synthesis"]["intensity_threshold"] = _num(cfg, "synthesis", "intensity_threshold")
    if not isinstance(c["synthesis"]["offset"], str):
        c["synthesis"]["offset"] = _num(cfg, "synthesis", "offset")
    if not isinstance(c["synthesis"]["binarize_threshold"], str):
        c["synthesis"]["binarize_threshold"] = _num(cfg, "synthesis", "binarize_threshold")
    c["synthesis"]["fabrication_pixel"] = _num(cfg, "synthesis", "fabrication_pixel", allow_none=True)
    if not isinstance(c["absorption"]["enabled"], bool):
        raise ConfigError("absorption.enabled must be true or false")
    if c["absorption"]["table"] is not None:
        c["absorption"]["table"] = str(c["absorption"]["table"])
    for k in ("confidence", "prior_right", "floor_factor"):
        c["stats"][k] = _num(cfg, "stats", k)
    for k in ("n_trials", "max_incident", "seed"):
        c["stats"][k] = _num(cfg, "stats", k, int)
    g = c["grating"]
    if not isinstance(g["energies"], list) or not g["energies"]:
        raise ConfigError("grating.energies must be a non-empty list")
    for e in g["energies"]:
        if isinstance(e, bool) or not isinstance(e, (int, float)):
            raise ConfigError(f"grating energy {e!r} is not a number")
    g["energies"] = [float(e) for e in g["energies"]]
    for k in ("slit_spacing", "hole_diameter", "source_to_element", "source_to_screen", "grid_pixel"):
        g[k] = _num(cfg, "grating", k)
    for k in ("rows", "cols", "n_gratings", "grid_n"):
        g[k] = _num(cfg, "grating", k, int)
    for k in ("pitch_y", "separation"):
        g[k] = _num(cfg, "grating", k, allow_none=True)
    if not isinstance(g["point_source"], bool):
        raise ConfigError("grating.point_source must be true or false")
    if g["separation"] is None:
        g["separation"] = default_separation(90.0, g["slit_spacing"], g["source_to_element"], g["source_to_screen"])
    return c


@dataclass(frozen=True)
class Experiment:
    """Validated objects built from a resolved configuration."""

    config: dict
    energy: float
    wavelength: float
    geometry: ChainGeometry
    synthesis: SynthesisParams
    absorption: AbsorptionModel | None
    mode: Mode
    grating_spec: GratingSpec
    projection: ProjectionGeometry
    grating_grid: GratingGrid

    @property
    def hash(self) -> str:
        return config_hash(self.config)


def config_hash(cfg: dict) -> str:
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(text.encode()).hexdigest()


def resolve(cfg: dict, seed: int | None = None, mode: str | None = None) -> Experiment:
    """Apply command-line overrides, normalise, and validate every section.

    Any failure is reported as :class:`ConfigError` before computation starts.
    """
    cfg = copy.deepcopy(cfg)
    if seed is not None:
        cfg["stats"]["seed"] = seed
    if mode is not None:
        cfg["stats"]["mode"] = mode
    try:
        c = _normalize(cfg)
        return _build(c)
    except ConfigError:
        raise
    except (LowdoseError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def _build(c: dict) -> Experiment:
    energy = c["beam"]["energy"]
    if not energy > 0:
        raise ConfigError("beam.energy must be positive")
    wl = electron_wavelength(energy)
    d = c["distances"]
    geom = ChainGeometry(
        n=c["grid"]["n"],
        specimen_pixel=c["grid"]["specimen_pixel"],
        element_pixel=c["grid"]["element_pixel"],
        screen_distance=d["element_to_screen"],
        focus_offset=d["focus_offset"],
        beam_diameter_factor=d["beam_diameter_factor"],
    )
    geom.validate(wl)
    z1 = geom.specimen_to_element(wl)
    if d["specimen_to_element"] is not None and not math.isclose(d["specimen_to_element"], z1, rel_tol=1e-6):
        raise ConfigError(
            f"distances.specimen_to_element={d['specimen_to_element']} m does not map the "
            f"{geom.specimen_pixel} m specimen grid onto the {geom.element_pixel} m element grid "
            f"(needs {z1!r} m)"
        )
    p = c["phantom"]
    if p["path"] is None:
        if p["extent"] > 0.75 * geom.n * geom.specimen_pixel:
            raise ConfigError("phantom.extent leaves less than a 25% guard band in the specimen field")
        if geom.beam_diameter_factor * p["extent"] > geom.n * geom.specimen_pixel:
            raise ConfigError("beam disk does not fit in the specimen field")
    elif not Path(p["path"]).is_file():
        raise ConfigError(f"phantom.path {p['path']} does not exist")
    s = c["synthesis"]
    params = SynthesisParams(s["intensity_threshold"], s["offset"], s["binarize_threshold"])
    if s["kind"] not in ("binary", "continuous"):
        raise ConfigError("synthesis.kind must be 'binary' or 'continuous'")
    if s["target"] not in ("focus", "identity"):
        raise ConfigError("synthesis.target must be 'focus' or 'identity'")
    fab = s["fabrication_pixel"]
    if fab is not None:
        k = fab / geom.element_pixel
        if round(k) < 1 or abs(k - round(k)) > 1e-6 * k or geom.n % round(k):
            raise ConfigError(
                f"synthesis.fabrication_pixel={fab} m is not a whole-block multiple of the "
                f"{geom.element_pixel} m element grid"
            )
    a = c["absorption"]
    absorption = None
    if a["enabled"]:
        absorption = AbsorptionModel.from_csv(a["table"]) if a["table"] else AbsorptionModel()
        absorption.mean_free_path(energy)
    st = c["stats"]
    if not 0.5 < st["confidence"] < 1:
        raise ConfigError("stats.confidence must lie in (0.5, 1)")
    if st["n_trials"] < 1 or st["max_incident"] < 1:
        raise ConfigError("stats.n_trials and stats.max_incident must be positive")
    if not 0 < st["prior_right"] < 1:
        raise ConfigError("stats.prior_right must lie in (0, 1)")
    if not st["floor_factor"] > 0:
        raise ConfigError("stats.floor_factor must be positive")
    if st["seed"] < 0:
        raise ConfigError("stats.seed must be non-negative")
    try:
        mode = Mode(st["mode"])
    except ValueError:
        raise ConfigError(f"stats.mode must be one of {[m.value for m in Mode]}") from None
    g = c["grating"]
    spec = GratingSpec(g["slit_spacing"], g["hole_diameter"], g["rows"], g["cols"], g["n_gratings"], g["pitch_y"], g["separation"])
    proj = ProjectionGeometry(g["source_to_element"], g["source_to_screen"], g["point_source"])
    ggrid = GratingGrid(g["grid_n"], g["grid_pixel"])
    for e in g["energies"]:
        if not e > 0:
            raise ConfigError("grating energies must be positive")
    if spec.hole_diameter < 4 * ggrid.pixel_size:
        raise ConfigError("grating grid resolves holes with fewer than 4 pixels")
    return Experiment(c, energy, wl, geom, params, absorption, mode, spec, proj, ggrid)


def check_grating_energies(exp: Experiment) -> None:
    """Paraxial check for every sweep energy (raises ParaxialError)."""
    for e in exp.config["grating"]["energies"]:
        grating_equation(electron_wavelength(e), exp.grating_spec.slit_spacing)
