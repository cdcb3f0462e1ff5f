"""Command-line entry point: ``lowdose {wavelength,synthesize,ensemble,grating,verify}``.

Exit codes: 0 success, 1 verification mismatch, 2 invalid input or
configuration, 3 numerical or geometry failure during computation.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import check_grating_energies, config_hash, load_config, resolve
from .detection import write_event_log
from .errors import ConfigError, DomainError, LowdoseError, ShapeError
from .field import electron_wavelength
from .gratings import sweep, write_sweep_csv
from .hypothesis import Mode, confidence_curve, event_rows, run_ensemble, write_traces
from .pipeline import build_setup
from .specimen import Orientation

log = logging.getLogger("lowdose")

EXIT_OK, EXIT_MISMATCH, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2, 3
HASH_KEY = "config_sha256"
_HASH_RE = re.compile(rb"config_sha256[\"'=:\s]*\"?([0-9a-f]{64})")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _stamp(h: str) -> list[str]:
    return [f"{HASH_KEY}={h}"]


def _write_config(out: Path, exp) -> None:
    _write_json(out / "config.json", {HASH_KEY: exp.hash, "config": exp.config})


def cmd_wavelength(args) -> int:
    energies = []
    for tok in args.energies:
        try:
            energies.append(float(tok))
        except ValueError:
            raise ConfigError(f"not a number: {tok!r}") from None
    if any(not e > 0 for e in energies):
        raise DomainError("energies must be positive")
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["energy_eV", "wavelength_m", "wavelength_pm"])
    for e in energies:
        wl = float(electron_wavelength(e))
        w.writerow([f"{e:g}", f"{wl:.6e}", f"{wl * 1e12:.4f}"])
    return EXIT_OK


def _experiment(args):
    return resolve(load_config(args.config), seed=args.seed, mode=args.mode)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synthesize(args) -> int:
    exp = _experiment(args)
    out = _out(args)
    setup = build_setup(exp)
    h = exp.hash
    meta = {HASH_KEY: h}
    setup.continuous.to_pgm(out / "element_continuous.pgm", meta)
    if setup.fabricated.kind == "binary":
        setup.fabricated.to_pbm(out / "element_binary.pbm", meta)
        setup.fabricated.write_hole_csv(out / "holes.csv", _stamp(h))
    setup.right.to_pgm(out / "screen_right.pgm", meta)
    setup.wrong.to_pgm(out / "screen_wrong.pgm", meta)
    win = setup.window
    area = float(win.mean())
    report = {
        HASH_KEY: h,
        "config": exp.config,
        "wavelength_m": exp.wavelength,
        "specimen_to_element_m": exp.geometry.specimen_to_element(exp.wavelength),
        "screen_pixel_m": exp.geometry.screen_pixel(exp.wavelength),
        "focus_pixel": list(exp.geometry.focus_index()),
        "element_open_fraction": setup.fabricated.open_fraction,
        "T_element": setup.right.t_element,
        "T_specimen": setup.right.t_specimen,
        "spot_window_area_fraction": area,
        "right": _dist_report(setup.right, win),
        "wrong": _dist_report(setup.wrong, win),
    }
    report["gain_right_over_wrong"] = report["right"]["spot_gain"] / report["wrong"]["spot_gain"]
    _write_json(out / "synthesize.json", report)
    _write_config(out, exp)
    log.info("right spot gain %.1f, wrong %.1f", report["right"]["spot_gain"], report["wrong"]["spot_gain"])
    return EXIT_OK


def _dist_report(dist, win) -> dict:
    return {
        "detect_prob": dist.detect_prob,
        "T_specimen": dist.t_specimen,
        "T_element": dist.t_element,
        "spot_window_mass": dist.window_mass(win),
        "spot_gain": dist.gain(win),
    }


def cmd_ensemble(args) -> int:
    exp = _experiment(args)
    out = _out(args)
    setup = build_setup(exp)
    st = exp.config["stats"]
    pair = setup.pair(st["prior_right"], st["floor_factor"])
    h = exp.hash
    summary = {
        HASH_KEY: h,
        "config": exp.config,
        "seed_derivation": "PCG64(SeedSequence([stats.seed, truth_index, trial])), truth_index 0=right 1=wrong",
        "right_distribution": _dist_report(setup.right, setup.window),
        "wrong_distribution": _dist_report(setup.wrong, setup.window),
        "absorbed_likelihood_ratio": pair.absorbed_ratio,
        "results": {},
    }
    for truth in (Orientation.RIGHT, Orientation.WRONG):
        stats, results = run_ensemble(
            truth, pair, st["confidence"], st["n_trials"], st["seed"], exp.mode, st["max_incident"], args.threads
        )
        head = _stamp(h) + [f"truth={truth.value}", f"confidence={st['confidence']!r}", f"mode={exp.mode.value}"]
        write_traces(out / f"traces_{truth.value}.csv", results, head)
        write_event_log(out / f"events_{truth.value}.csv", event_rows(results), head)
        curve = confidence_curve(results)
        with open(out / f"confidence_{truth.value}.csv", "w", newline="") as fh:
            for line in head:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(curve.dtype.names)
            for row in curve:
                w.writerow([int(row[0])] + [repr(float(v)) for v in list(row)[1:]])
        d = stats.to_dict()
        t = pair.distribution(truth).detect_prob
        d["incident_over_detected"] = stats.mean_incident / stats.mean_detected if stats.n_decided else None
        d["inverse_detect_prob"] = 1.0 / t if t > 0 else None
        d["trial_seeds"] = [list(r.seed) for r in results]
        summary["results"][truth.value] = d
        log.info("%s: %.2f +- %.2f detected, %.2f +- %.2f incident", truth.value,
                 stats.mean_detected, stats.std_detected, stats.mean_incident, stats.std_incident)
    _write_json(out / "ensemble.json", _finite(summary))
    _write_config(out, exp)
    return EXIT_OK


def _finite(obj):
    """Replace NaN (no decided trials) by None so the JSON stays strict."""
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_finite(v) for v in obj]
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def cmd_grating(args) -> int:
    exp = _experiment(args)
    check_grating_energies(exp)
    out = _out(args)
    h = exp.hash
    rows = sweep(exp.grating_spec, exp.projection, exp.config["grating"]["energies"], exp.grating_grid, args.threads)
    write_sweep_csv(out / "sweep.csv", rows, _stamp(h))
    table = []
    for energy, dist, ext in rows:
        dist.to_pgm(out / f"pattern_{energy:g}eV.pgm", {HASH_KEY: h, "energy_eV": f"{energy:g}"})
        wl = float(electron_wavelength(energy))
        table.append({
            "energy_eV": energy,
            "wavelength_m": wl,
            "angle_mrad": ext.angle_mrad,
            "merged": ext.merged,
            "plane_wave_angle_mrad": wl / exp.grating_spec.slit_spacing * 1e3,
            "order_period_pixels": ext.period_pixels if np.isfinite(ext.period_pixels) else None,
            "peaks_pixels": [list(p) for p in ext.peaks],
        })
    fit = _linear_fit([r["wavelength_m"] for r in table if not r["merged"]],
                      [r["angle_mrad"] for r in table if not r["merged"]])
    _write_json(out / "grating.json", {HASH_KEY: h, "config": exp.config, "sweep": table, "fit_through_origin": fit})
    _write_config(out, exp)
    return EXIT_OK


def _linear_fit(x, y) -> dict | None:
    if len(x) < 2:
        return None
    x = np.asarray(x)
    y = np.asarray(y)
    slope = float(x @ y / (x @ x))
    ss_res = float(((y - slope * x) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    return {"slope_mrad_per_m": slope, "r_squared": 1 - ss_res / ss_tot if ss_tot > 0 else None}


def cmd_verify(args) -> int:
    out = Path(args.out)
    cfg_file = out / "config.json"
    if not cfg_file.is_file():
        raise ConfigError(f"{cfg_file} not found")
    stored = json.loads(cfg_file.read_text())
    expected = config_hash(stored["config"])
    ok = stored.get(HASH_KEY) == expected
    if not ok:
        print(f"MISMATCH config.json: stored {stored.get(HASH_KEY)} recomputed {expected}")
    if args.config is not None or args.seed is not None or args.mode is not None:
        h = _experiment(args).hash
        if h != expected:
            print(f"MISMATCH supplied config hashes to {h}, outputs were made with {expected}")
            ok = False
    for f in sorted(out.iterdir()):
        if f.name == "config.json" or not f.is_file():
            continue
        m = _HASH_RE.search(f.read_bytes()[:65536])
        if m is None:
            print(f"MISSING {f.name}")
            ok = False
        elif m.group(1).decode() != expected:
            print(f"MISMATCH {f.name}: {m.group(1).decode()}")
            ok = False
        else:
            print(f"ok {f.name}")
    print(("verified " if ok else "FAILED ") + expected)
    return EXIT_OK if ok else EXIT_MISMATCH


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML configuration (defaults fill missing keys)")
    common.add_argument("--seed", type=int, help="master seed, overrides stats.seed")
    common.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for trials and sweeps")
    common.add_argument("--mode", choices=[m.value for m in Mode], help="posterior update mode")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="lowdose", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    w = sub.add_parser("wavelength", help="electron wavelength for kinetic energies in eV")
    w.add_argument("energies", nargs="+", help="kinetic energies in eV")
    w.set_defaults(func=cmd_wavelength)
    for name, func, text in (
        ("synthesize", cmd_synthesize, "design the element and report focal gain"),
        ("ensemble", cmd_ensemble, "run the sequential test for both true orientations"),
        ("grating", cmd_grating, "simulate hole-array diffraction over an energy sweep"),
        ("verify", cmd_verify, "check that every output carries the config hash"),
    ):
        sp = sub.add_parser(name, parents=[common], help=text)
        sp.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except (ConfigError, DomainError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (LowdoseError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
