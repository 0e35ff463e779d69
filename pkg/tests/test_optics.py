import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dihm.errors import ConfigurationError, ShapeError
from dihm.optics import (OpticalConfig, axial_frequency, interference_kernel, propagate,
                         propagating_band, transfer_function, uniform_planes)

from helpers import small_config


def band_limited(config, seed):
    rng = np.random.default_rng(seed)
    field = rng.normal(size=config.shape) + 1j * rng.normal(size=config.shape)
    spec = np.fft.fft2(field) * propagating_band(config)
    return np.fft.ifft2(spec)


def energy(field):
    return float(np.sum(np.abs(field) ** 2))


# -- configuration -------------------------------------------------------------

def test_default_geometry():
    cfg = OpticalConfig()
    assert cfg.shape == (2048, 2048)
    assert cfg.n_planes == 40
    assert cfg.lateral_resolution == cfg.pixel_pitch
    # 2.29 x 2.29 mm footprint over a 10 mm gap: about 53 uL
    assert cfg.sample_volume_ul == pytest.approx(52.6, abs=0.05)
    assert cfg.plane_spacing == pytest.approx(0.25e-3)


def test_uniform_planes_are_cell_centred():
    z = uniform_planes(10e-3, 4)
    assert z == pytest.approx((1.25e-3, 3.75e-3, 6.25e-3, 8.75e-3))


@pytest.mark.parametrize("kw", [
    {"wavelength": 0.0}, {"wavelength": -1e-9}, {"pixel_pitch": 0.0},
    {"sensor_width": 15}, {"sensor_height": 0}, {"gap_depth": -1.0},
    {"z_planes": ()}, {"z_planes": (2e-3, 1e-3)}, {"z_planes": (1e-3, 20e-3)},
    {"wavelength": float("nan")},
])
def test_invalid_config(kw):
    with pytest.raises(ConfigurationError):
        OpticalConfig(**kw)


def test_replace_rebuilds_planes():
    cfg = small_config(planes=4).replace(n_planes=8)
    assert cfg.n_planes == 8 and len(cfg.z_planes) == 8


# -- transfer function ---------------------------------------------------------

def test_transfer_function_identity_at_zero():
    cfg = small_config()
    h = transfer_function(cfg, 0.0)
    band = propagating_band(cfg)
    assert np.all(h[band] == 1.0)
    assert np.all(h[~band] == 0.0)


def test_evanescent_cutoff():
    # a 0.2 um pitch samples frequencies past 1/lambda (about 1.538e6 1/m)
    cfg = small_config(pixel_pitch=0.2e-6)
    fx = np.fft.fftfreq(cfg.sensor_width, cfg.pixel_pitch)
    band = propagating_band(cfg)
    assert not band.all()
    cutoff = 1 / cfg.wavelength
    assert cutoff == pytest.approx(1.538e6, rel=1e-3)
    assert band[0, np.abs(fx) < cutoff].all()
    assert not band[0, np.abs(fx) > cutoff].any()
    h = transfer_function(cfg, 1e-3)
    assert np.all(h[~band] == 0)


def test_transfer_function_unit_modulus_on_band():
    cfg = small_config()
    h = transfer_function(cfg, 3e-3)
    band = propagating_band(cfg)
    assert np.allclose(np.abs(h[band]), 1.0, atol=1e-12)


def test_transfer_function_rejects_large_distance():
    with pytest.raises(ConfigurationError):
        transfer_function(small_config(), 2.0)


def test_interference_kernel_matches_complex_propagation():
    # Re(exp(-i k z) P_z x) for real x equals irfft2(K rfft2(x))
    cfg = small_config(n=64)
    z = 4e-3
    x = np.random.default_rng(1).random(cfg.shape)
    carrier = np.exp(-2j * np.pi * z / cfg.wavelength)
    ref = np.real(carrier * propagate(x, z, cfg))
    k = interference_kernel(cfg, z)
    got = np.fft.irfft2(k * np.fft.rfft2(x), s=cfg.shape)
    assert np.allclose(got, ref, atol=1e-12)


def test_axial_frequency_half_grid_shape():
    cfg = small_config(n=64)
    kz, band = axial_frequency(cfg, half=True)
    assert kz.shape == (64, 33) and band.shape == (64, 33)


# -- propagation ---------------------------------------------------------------

def test_identity_at_zero():
    cfg = small_config()
    f = band_limited(cfg, 0)
    out = propagate(f, 0.0, cfg)
    assert np.linalg.norm(out - f) <= 1e-12 * np.linalg.norm(f)


def test_identity_for_arbitrary_field():
    cfg = small_config()
    rng = np.random.default_rng(5)
    f = rng.normal(size=cfg.shape) + 1j * rng.normal(size=cfg.shape)
    out = propagate(f, 0.0, cfg)
    assert np.linalg.norm(out - f) <= 1e-12 * np.linalg.norm(f)


@pytest.mark.parametrize("z", [1e-3, 5e-3, -7e-3])
def test_energy_conservation(z):
    cfg = small_config()
    f = band_limited(cfg, 1)
    assert energy(propagate(f, z, cfg)) == pytest.approx(energy(f), rel=1e-9)


def test_composition():
    cfg = small_config()
    f = band_limited(cfg, 2)
    two = propagate(propagate(f, 2e-3, cfg), 3e-3, cfg)
    one = propagate(f, 5e-3, cfg)
    assert np.linalg.norm(two - one) <= 1e-9 * np.linalg.norm(one)


def test_round_trip_unitarity():
    cfg = small_config()
    f = band_limited(cfg, 3)
    back = propagate(propagate(f, 6e-3, cfg), -6e-3, cfg)
    assert np.linalg.norm(back - f) <= 1e-9 * np.linalg.norm(f)


@settings(max_examples=25, deadline=None)
@given(z1=st.floats(-5e-3, 5e-3), z2=st.floats(-5e-3, 5e-3), seed=st.integers(0, 2**16))
def test_composition_property(z1, z2, seed):
    cfg = small_config(n=32)
    f = band_limited(cfg, seed)
    a = propagate(propagate(f, z1, cfg), z2, cfg)
    b = propagate(f, z1 + z2, cfg)
    assert np.linalg.norm(a - b) <= 1e-9 * np.linalg.norm(b)
    assert energy(a) == pytest.approx(energy(f), rel=1e-9)


@pytest.mark.parametrize("z", [0.0, 1e-3, 9e-3])
def test_plane_wave_eigenfunction(z):
    cfg = small_config()
    out = propagate(np.ones(cfg.shape), z, cfg)
    assert np.allclose(np.abs(out), 1.0, atol=1e-9)


def test_point_round_trip_refocuses():
    cfg = small_config(n=128)
    f = np.zeros(cfg.shape, complex)
    f[64, 64] = 1.0
    back = propagate(propagate(f, 5e-3, cfg), -5e-3, cfg)
    assert np.unravel_index(np.argmax(np.abs(back)), cfg.shape) == (64, 64)


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        propagate(np.ones((8, 8)), 1e-3, small_config())


def test_non_finite_field():
    cfg = small_config()
    f = np.ones(cfg.shape)
    f[0, 0] = np.nan
    with pytest.raises(ShapeError):
        propagate(f, 1e-3, cfg)
