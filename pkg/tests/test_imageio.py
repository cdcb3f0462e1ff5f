import numpy as np
import pytest

from lowdose.imageio import read_csv_grid, read_pbm, read_pgm, write_csv_grid, write_pbm, write_pgm


def test_pgm_round_trip(tmp_path):
    a = np.linspace(0, 3.5, 12).reshape(3, 4)
    scale = write_pgm(tmp_path / "a.pgm", a, {"pixel_size": "1e-09", "note": "x"})
    b, meta = read_pgm(tmp_path / "a.pgm")
    assert b.shape == a.shape
    assert np.max(np.abs(a - b)) <= scale / 2 + 1e-15
    assert meta["pixel_size"] == pytest.approx(1e-9)
    assert meta["note"] == "x"
    raw = (tmp_path / "a.pgm").read_bytes()
    assert raw.startswith(b"P5")


def test_pbm_round_trip(tmp_path):
    m = np.random.default_rng(0).integers(0, 2, size=(5, 11))
    write_pbm(tmp_path / "m.pbm", m, {"k": "v"})
    back, meta = read_pbm(tmp_path / "m.pbm")
    assert np.array_equal(back, m)
    assert meta["k"] == "v"


def test_csv_grid_round_trip_is_exact(tmp_path):
    a = np.random.default_rng(1).random((4, 6))
    write_csv_grid(tmp_path / "g.csv", a, 2.5e-9, {"tag": "t"})
    b, px, meta = read_csv_grid(tmp_path / "g.csv")
    assert np.array_equal(a, b)
    assert px == 2.5e-9
    assert meta["nx"] == 4 and meta["ny"] == 6 and meta["tag"] == "t"
