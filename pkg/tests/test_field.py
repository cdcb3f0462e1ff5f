import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lowdose.errors import DomainError, GeometryError, ShapeError
from lowdose.field import (
    BeamParameters,
    ComplexField,
    angular_spectrum_limit,
    centered_coordinates,
    electron_wavelength,
    point_source_illumination,
    propagate_angular_spectrum,
    propagate_fresnel_scaled,
)
from oracles import angular_spectrum_dense, fresnel_direct, wavelength

# frozen from an independent 40-digit evaluation of the relativistic formula
LAMBDA_149 = 1.0046540659191557e-10
LAMBDA_90 = 1.2927095587702784e-10
LAMBDA_100K = 3.7014366114870845e-12
LAMBDA_15K = 9.9410388342230815e-12


def random_field(rng, n=64, dx=1e-9, smooth=True):
    v = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    if smooth:
        # keep well inside the band so the semigroup check is not aliasing-limited
        spec = np.fft.fft2(v)
        f = np.fft.fftfreq(n)
        spec *= np.exp(-((f[:, None] ** 2 + f[None, :] ** 2) / 0.02))
        v = np.fft.ifft2(spec)
    return ComplexField(v, dx)


@pytest.mark.parametrize(
    "energy, expected",
    [(149, LAMBDA_149), (90, LAMBDA_90), (1e5, LAMBDA_100K), (15e3, LAMBDA_15K)],
)
def test_wavelength_frozen_values(energy, expected):
    assert electron_wavelength(energy) == pytest.approx(expected, rel=1e-9)


def test_wavelength_rounded_landmarks():
    # 100.47 pm: 100.4 pm to the stated precision
    assert electron_wavelength(149) * 1e12 == pytest.approx(100.4, abs=0.1)
    assert electron_wavelength(90) * 1e12 == pytest.approx(129, abs=0.5)
    assert electron_wavelength(1e5) * 1e12 == pytest.approx(3.701, abs=5e-4)
    assert 0.073e-9 < electron_wavelength(149) < 0.13e-9


def test_wavelength_matches_scalar_oracle():
    for e in np.geomspace(1, 3e5, 37):
        assert electron_wavelength(e) == pytest.approx(wavelength(e), rel=1e-12)


def test_wavelength_monotone():
    e = np.linspace(1, 3e5, 1000)
    lam = electron_wavelength(e)
    assert np.all(np.diff(lam) < 0)
    assert np.all(lam > 0)


@pytest.mark.parametrize("bad", [0, -1, -1e5])
def test_wavelength_rejects_non_positive(bad):
    with pytest.raises(DomainError):
        electron_wavelength(bad)
    with pytest.raises(DomainError):
        BeamParameters(bad)


def test_beam_parameters():
    assert BeamParameters(149).wavelength == electron_wavelength(149)


def test_field_validation_and_immutability():
    with pytest.raises(DomainError):
        ComplexField(np.array([[np.nan]]), 1e-9)
    with pytest.raises(DomainError):
        ComplexField(np.ones((2, 2)), 0)
    with pytest.raises(ShapeError):
        ComplexField(np.ones(4), 1e-9)
    src = np.ones((4, 4), complex)
    f = ComplexField(src, 1e-9)
    src[0, 0] = 5
    assert f.values[0, 0] == 1
    with pytest.raises(ValueError):
        f.values[0, 0] = 2
    assert f.total_intensity == pytest.approx(16e-18)


def test_centered_coordinates_axis_pixel():
    x = centered_coordinates(8, 2.0)
    assert x[4] == 0 and x[0] == -8 and x[-1] == 6
    x = centered_coordinates(7, 1.0)
    assert x[3] == 0


def test_angular_spectrum_zero_distance_identity():
    f = random_field(np.random.default_rng(0))
    assert propagate_angular_spectrum(f, 0.0, 1e-11) is f


def test_angular_spectrum_plane_wave_stays_uniform():
    f = ComplexField.plane_wave((32, 32), 1e-9)
    g = propagate_angular_spectrum(f, 1e-6, 1e-11)
    assert np.allclose(np.abs(g.values), 1.0, atol=1e-13)


def test_angular_spectrum_against_dense_oracle():
    rng = np.random.default_rng(3)
    f = random_field(rng, n=16, dx=0.2e-9, smooth=False)
    wl, z = 1e-11, 20e-9
    got = propagate_angular_spectrum(f, z, wl).values
    want = angular_spectrum_dense(f.values, 0.2e-9, z, wl)
    assert np.max(np.abs(got - want)) < 1e-12 * np.max(np.abs(want))


def test_angular_spectrum_gaussian_round_trip():
    n, dx, wl = 128, 0.5e-9, 1e-11
    x = centered_coordinates(n, dx)
    g = np.exp(-(x[:, None] ** 2 + x[None, :] ** 2) / (2 * (5e-9) ** 2))
    f = ComplexField(g, dx)
    z = 0.9 * angular_spectrum_limit(f.shape, dx, wl)
    back = propagate_angular_spectrum(propagate_angular_spectrum(f, z, wl), -z, wl)
    assert np.sqrt(np.mean(np.abs(back.values - g) ** 2)) < 1e-8


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), a=st.floats(0.05, 0.5), b=st.floats(0.05, 0.45))
def test_angular_spectrum_semigroup(seed, a, b):
    wl, dx = 1e-11, 1e-9
    f = random_field(np.random.default_rng(seed), n=64, dx=dx)
    lim = angular_spectrum_limit(f.shape, dx, wl)
    z1, z2 = a * lim, b * lim
    two = propagate_angular_spectrum(propagate_angular_spectrum(f, z1, wl), z2, wl)
    one = propagate_angular_spectrum(f, z1 + z2, wl)
    scale = np.sqrt(np.mean(np.abs(one.values) ** 2))
    assert np.sqrt(np.mean(np.abs(two.values - one.values) ** 2)) <= 1e-8 * scale


def test_angular_spectrum_geometry_errors():
    f = ComplexField.plane_wave((32, 32), 1e-9)
    lim = angular_spectrum_limit(f.shape, 1e-9, 1e-11)
    with pytest.raises(GeometryError, match="limit"):
        propagate_angular_spectrum(f, 1.01 * lim, 1e-11)
    with pytest.raises(GeometryError, match="evanescent"):
        propagate_angular_spectrum(ComplexField.plane_wave((8, 8), 1e-12), 1e-12, 1e-11)
    with pytest.raises(DomainError):
        propagate_angular_spectrum(f, 1e-9, -1.0)


def test_fresnel_output_pixel_example():
    f = ComplexField.plane_wave((512, 512), 0.5e-9)
    g = propagate_fresnel_scaled(f, 1.024e-3, 10e-12)
    assert g.pixel_size == pytest.approx(40e-9, rel=1e-12)


def test_fresnel_against_direct_integral():
    rng = np.random.default_rng(5)
    n, dx, wl, z = 8, 1e-9, 1e-11, 2e-6
    v = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    got = propagate_fresnel_scaled(ComplexField(v, dx), z, wl)
    want, dout = fresnel_direct(v, dx, z, wl)
    assert got.pixel_size == pytest.approx(dout)
    # equal up to the dropped constant exp(ikz)/i, i.e. a global phase
    ratio = want.ravel() @ np.conj(got.values.ravel()) / np.vdot(got.values, got.values)
    assert abs(abs(ratio) - 1) < 1e-12
    assert np.max(np.abs(want - ratio * got.values)) < 1e-12 * np.max(np.abs(want))


@pytest.mark.parametrize("seed", range(5))
def test_fresnel_parseval(seed):
    f = random_field(np.random.default_rng(seed), n=128, smooth=False)
    g = propagate_fresnel_scaled(f, 1e-3, 1e-11)
    assert g.total_intensity / f.total_intensity == pytest.approx(1, abs=1e-8)


def test_fresnel_point_source_symmetry():
    n = 64
    v = np.zeros((n, n), complex)
    v[n // 2, n // 2] = 1
    out = propagate_fresnel_scaled(ComplexField(v, 1e-9), 1e-3, 1e-11).intensity
    c = n // 2
    core = out[1:, 1:]
    assert np.max(np.abs(core - core[::-1, :])) <= 1e-6 * out.max()
    assert np.max(np.abs(core - core.T)) <= 1e-6 * out.max()
    assert abs(out[c, c] - out[c + 5, c - 3]) <= 1e-6 * out.max()


def test_fresnel_rejects_bad_input():
    f = ComplexField.plane_wave((8, 8), 1e-9)
    for z in (0.0, -1e-3):
        with pytest.raises(DomainError):
            propagate_fresnel_scaled(f, z, 1e-11)
    with pytest.raises(ShapeError):
        propagate_fresnel_scaled(ComplexField.plane_wave((8, 4), 1e-9), 1e-3, 1e-11)


def test_point_source_phase():
    wl, z0, dx, n = 0.1e-9, 360e-6, 2.5e-9, 64
    f = point_source_illumination((n, n), dx, z0, wl)
    x = centered_coordinates(n, dx)
    want = math.pi * (x[:, None] ** 2 + x[None, :] ** 2) / (wl * z0)
    got = np.angle(f.values)
    wrapped = np.angle(np.exp(1j * (got - want)))
    assert np.max(np.abs(wrapped)) <= 1e-9
    assert f.values[n // 2, n // 2] == 1
    assert np.allclose(np.abs(f.values), 1)


def test_point_source_quadratic_scaling():
    wl, z0, dx = 0.1e-9, 360e-6, 1e-9
    f = point_source_illumination((64, 64), dx, z0, wl)
    c = 32
    # pixel (c+3, c+3) lies sqrt(2) further out than (c+3, c)
    p1 = math.pi * (3 * dx) ** 2 / (wl * z0)
    assert np.angle(f.values[c + 3, c]) == pytest.approx(p1, rel=1e-12)
    assert np.angle(f.values[c + 3, c + 3]) == pytest.approx(2 * p1, rel=1e-12)


@pytest.mark.parametrize("z", [math.inf, None])
def test_point_source_infinite_distance_is_plane(z):
    f = point_source_illumination((8, 8), 1e-9, z, 1e-10)
    assert np.all(f.values == 1)


def test_point_source_domain():
    with pytest.raises(DomainError):
        point_source_illumination((8, 8), 1e-9, -1.0, 1e-10)
