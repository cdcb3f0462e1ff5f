"""Plain-file exports: 16-bit PGM, 1-bit PBM and row-major CSV grids.

Every writer accepts ``meta``, a mapping written as ``# key=value`` comment
lines so files stay self-describing (grid size, pixel size, config hash).
Readers return the array together with the parsed metadata.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .errors import ShapeError

__all__ = ["read_csv_grid", "read_pbm", "read_pgm", "write_csv_grid", "write_pbm", "write_pgm"]


def _comment_block(meta) -> str:
    if not meta:
        return ""
    return "".join(f"# {k}={v}\n" for k, v in meta.items())


def _parse_value(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def write_pgm(path, data, meta=None, scale: float | None = None) -> float:
    """Write ``data`` (non-negative, 2D) as a binary 16-bit PGM.

    Values are quantised as ``round(data / scale)``; by default ``scale`` maps
    the maximum to 65535.  The scale is stored in the header and returned.
    """
    a = np.asarray(data, dtype=float)
    if a.ndim != 2:
        raise ShapeError(f"PGM needs a 2D array, got shape {a.shape}")
    if np.any(a < 0):
        raise ValueError("PGM export needs non-negative data")
    if scale is None:
        peak = float(a.max())
        scale = peak / 65535.0 if peak > 0 else 1.0
    q = np.clip(np.rint(a / scale), 0, 65535).astype(">u2")
    meta = dict(meta or {})
    meta["scale"] = repr(float(scale))
    header = f"P5\n{_comment_block(meta)}{a.shape[1]} {a.shape[0]}\n65535\n"
    Path(path).write_bytes(header.encode("ascii") + q.tobytes())
    return scale


def _read_header(buf: bytes, n_fields: int):
    meta = {}
    fields = []
    pos = 0
    while len(fields) < n_fields:
        end = buf.index(b"\n", pos)
        line = buf[pos:end].decode("ascii").strip()
        pos = end + 1
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key.strip()] = _parse_value(value.strip())
        elif line:
            fields.extend(line.split())
    return fields, meta, pos


def read_pgm(path):
    """Return ``(values, meta)``; values are rescaled by the stored ``scale``."""
    buf = Path(path).read_bytes()
    fields, meta, pos = _read_header(buf, 4)
    if fields[0] != "P5":
        raise ValueError(f"{path}: not a binary PGM")
    ny, nx, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    dtype = ">u2" if maxval > 255 else "u1"
    q = np.frombuffer(buf, dtype=dtype, count=nx * ny, offset=pos).reshape(nx, ny)
    return q.astype(float) * float(meta.get("scale", 1.0)), meta


def write_pbm(path, mask, meta=None) -> None:
    """Write a binary mask as P4 PBM.  PBM convention: bit 1 is black, so open (1) pixels are stored as 0."""
    m = np.asarray(mask)
    if m.ndim != 2:
        raise ShapeError(f"PBM needs a 2D array, got shape {m.shape}")
    black = (m == 0).astype(np.uint8)
    packed = np.packbits(black, axis=1)
    header = f"P4\n{_comment_block(meta)}{m.shape[1]} {m.shape[0]}\n"
    Path(path).write_bytes(header.encode("ascii") + packed.tobytes())


def read_pbm(path):
    buf = Path(path).read_bytes()
    fields, meta, pos = _read_header(buf, 3)
    if fields[0] != "P4":
        raise ValueError(f"{path}: not a binary PBM")
    ny, nx = int(fields[1]), int(fields[2])
    row_bytes = (ny + 7) // 8
    packed = np.frombuffer(buf, dtype=np.uint8, count=nx * row_bytes, offset=pos).reshape(nx, row_bytes)
    black = np.unpackbits(packed, axis=1)[:, :ny]
    return (1 - black).astype(np.uint8), meta


def write_csv_grid(path, data, pixel_size: float, meta=None) -> None:
    """Row-major CSV; row ``ix`` holds ``data[ix, :]``.  Header lines carry nx, ny, pixel_size."""
    a = np.asarray(data, dtype=float)
    if a.ndim != 2:
        raise ShapeError(f"CSV grid needs a 2D array, got shape {a.shape}")
    head = {"nx": a.shape[0], "ny": a.shape[1], "pixel_size": repr(float(pixel_size))}
    head.update(meta or {})
    out = io.StringIO()
    out.write(_comment_block(head))
    np.savetxt(out, a, delimiter=",", fmt="%.17g")
    Path(path).write_text(out.getvalue())


def read_csv_grid(path):
    """Return ``(values, pixel_size, meta)``."""
    meta = {}
    with open(path) as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key.strip()] = _parse_value(value.strip())
        elif line.strip():
            body.append(line)
    a = np.loadtxt(io.StringIO("\n".join(body)), delimiter=",", ndmin=2)
    if "nx" in meta and a.shape != (meta["nx"], meta["ny"]):
        raise ShapeError(f"{path}: header says {meta['nx']}x{meta['ny']}, data is {a.shape}")
    return a, float(meta["pixel_size"]), meta
