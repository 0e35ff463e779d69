"""Optical configuration and angular-spectrum free-space propagation.

Fields are plain 2D complex ``numpy`` arrays indexed ``[row, col]`` with rows
along the sensor y axis. Frequencies follow the unshifted discrete Fourier
convention of :func:`numpy.fft.fftfreq` (zero frequency at index 0), so no
``fftshift`` is ever applied.

Propagation distance ``z`` is signed: positive values move the field along the
beam (towards the sensor), negative values refocus back into the sample.
"""

from __future__ import annotations

import dataclasses
import functools
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .errors import ConfigurationError, ShapeError

MAX_PROPAGATION_DISTANCE = 1.0  # m, sanity bound on |z|


def uniform_planes(gap_depth: float, count: int) -> tuple[float, ...]:
    """Cell-centred planes: ``count`` slabs of equal thickness tiling the gap."""
    if count < 1:
        raise ConfigurationError(f"need at least one reconstruction plane, got {count}")
    spacing = gap_depth / count
    return tuple(float((k + 0.5) * spacing) for k in range(count))


@dataclass(frozen=True)
class OpticalConfig:
    """Geometry of a lensless in-line holographic sensor.

    All lengths are in metres. ``z_planes`` are distances from the sensor at
    which volumes are reconstructed; when omitted they default to ``n_planes``
    cell-centred planes spanning the whole sample gap.
    """

    wavelength: float = 650e-9
    pixel_pitch: float = 1.12e-6
    sensor_width: int = 2048
    sensor_height: int = 2048
    gap_depth: float = 10e-3
    z_planes: tuple[float, ...] | None = None
    n_planes: int = field(default=40, repr=False)

    def __post_init__(self):
        if self.z_planes is None:
            if self.gap_depth > 0:
                object.__setattr__(self, "z_planes", uniform_planes(self.gap_depth, self.n_planes))
            else:
                object.__setattr__(self, "z_planes", ())
        else:
            object.__setattr__(self, "z_planes", tuple(float(z) for z in self.z_planes))
        object.__setattr__(self, "n_planes", len(self.z_planes))
        self.validate()

    def validate(self):
        if not (np.isfinite(self.wavelength) and self.wavelength > 0):
            raise ConfigurationError(f"wavelength must be positive, got {self.wavelength}")
        if not (np.isfinite(self.pixel_pitch) and self.pixel_pitch > 0):
            raise ConfigurationError(f"pixel_pitch must be positive, got {self.pixel_pitch}")
        for name in ("sensor_width", "sensor_height"):
            n = getattr(self, name)
            if int(n) != n or n < 16 or n % 2:
                raise ConfigurationError(f"{name} must be an even integer >= 16, got {n}")
        if not (np.isfinite(self.gap_depth) and self.gap_depth > 0):
            raise ConfigurationError(f"gap_depth must be positive, got {self.gap_depth}")
        z = np.asarray(self.z_planes, dtype=float)
        if z.size == 0:
            raise ConfigurationError("z_planes is empty")
        if np.any(np.diff(z) <= 0):
            raise ConfigurationError("z_planes must be strictly increasing")
        if z[0] < 0 or z[-1] > self.gap_depth:
            raise ConfigurationError(
                f"z_planes must lie within [0, {self.gap_depth}], got [{z[0]}, {z[-1]}]"
            )

    @property
    def shape(self) -> tuple[int, int]:
        """Array shape ``(rows, cols)`` of a sensor frame."""
        return (self.sensor_height, self.sensor_width)

    @property
    def lateral_resolution(self) -> float:
        # lensless: resolution equals the pixel size
        return self.pixel_pitch

    @property
    def plane_spacing(self) -> float:
        z = self.z_planes
        if len(z) < 2:
            return self.gap_depth
        return float(np.mean(np.diff(z)))

    @property
    def footprint(self) -> tuple[float, float]:
        """Sensor footprint ``(width, height)`` in metres."""
        return (self.sensor_width * self.pixel_pitch, self.sensor_height * self.pixel_pitch)

    @property
    def sample_volume_m3(self) -> float:
        w, h = self.footprint
        return w * h * self.gap_depth

    @property
    def sample_volume_ul(self) -> float:
        # 1 uL = 1e-9 m^3
        return self.sample_volume_m3 * 1e9

    def replace(self, **changes) -> "OpticalConfig":
        """Copy with some fields changed; plane grid is rebuilt unless given."""
        if "z_planes" not in changes and ({"gap_depth", "n_planes"} & changes.keys()):
            changes["z_planes"] = None
            changes.setdefault("n_planes", self.n_planes)
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "wavelength": self.wavelength,
            "pixel_pitch": self.pixel_pitch,
            "sensor_width": self.sensor_width,
            "sensor_height": self.sensor_height,
            "gap_depth": self.gap_depth,
            "z_planes": list(self.z_planes),
        }


def _check_distance(z):
    if not np.isfinite(z) or abs(z) > MAX_PROPAGATION_DISTANCE:
        raise ConfigurationError(f"propagation distance {z} m outside |z| <= {MAX_PROPAGATION_DISTANCE} m")


def frequency_grid(config: OpticalConfig, half: bool = False):
    """Squared spatial frequency ``fx**2 + fy**2`` (cycles/m) on the transform grid.

    With ``half=True`` the grid matches :func:`scipy.fft.rfft2` output.
    """
    fy = np.fft.fftfreq(config.sensor_height, d=config.pixel_pitch)
    if half:
        fx = np.fft.rfftfreq(config.sensor_width, d=config.pixel_pitch)
    else:
        fx = np.fft.fftfreq(config.sensor_width, d=config.pixel_pitch)
    return fy[:, None] ** 2 + fx[None, :] ** 2


@functools.lru_cache(maxsize=16)
def _axial_frequency(wavelength, pitch, height, width, half):
    cfg = OpticalConfig(wavelength=wavelength, pixel_pitch=pitch, sensor_width=width,
                        sensor_height=height, z_planes=(0.0,), gap_depth=1.0)
    arg = 1.0 / wavelength**2 - frequency_grid(cfg, half=half)
    band = arg > 0
    kz = np.sqrt(np.where(band, arg, 0.0))
    kz.flags.writeable = False
    band.flags.writeable = False
    return kz, band


def axial_frequency(config: OpticalConfig, half: bool = False):
    """Return ``(sqrt(1/lambda^2 - f^2), propagating_band_mask)``."""
    return _axial_frequency(config.wavelength, config.pixel_pitch,
                            config.sensor_height, config.sensor_width, half)


def propagating_band(config: OpticalConfig) -> np.ndarray:
    """Boolean mask of non-evanescent frequencies on the full transform grid."""
    return axial_frequency(config)[1]


def transfer_function(config: OpticalConfig, z: float) -> np.ndarray:
    """Angular-spectrum transfer function for a propagation distance ``z``.

    ``H = exp(i 2 pi z sqrt(1/lambda^2 - fx^2 - fy^2))`` on propagating
    frequencies and exactly zero on evanescent ones.

    Parameters
    ----------
    config : OpticalConfig
        Supplies wavelength, pixel pitch and grid size.
    z : float
        Signed distance in metres, ``|z| <= 1``.

    Returns
    -------
    numpy.ndarray
        Complex128 array of shape ``config.shape`` in unshifted FFT order.
    """
    config.validate()
    _check_distance(z)
    kz, band = axial_frequency(config)
    return np.where(band, np.exp(2j * np.pi * z * kz), 0.0)


def interference_kernel(config: OpticalConfig, z: float, dtype=np.float64) -> np.ndarray:
    """Real transfer function seen in a recorded intensity, on the ``rfft2`` grid.

    A weak object ``o`` at distance ``z`` changes the recorded intensity by
    ``-2 Re(exp(-i 2 pi z / lambda) P_z o)``: its scattered wave beats against
    the reference wave, which carries the plane-wave phase ``2 pi z / lambda``.
    The kernel is therefore ``cos(2 pi z (sqrt(1/lambda^2 - f^2) - 1/lambda))``.
    It depends on ``fx**2 + fy**2`` only, so ``Re(ifft2(K * fft2(x)))`` equals
    ``irfft2(K * rfft2(x))`` for real ``x``.
    """
    _check_distance(z)
    kz, band = axial_frequency(config, half=True)
    phase = 2 * np.pi * z * (kz - 1.0 / config.wavelength)
    return np.where(band, np.cos(phase), 0.0).astype(dtype)


def propagate(field: np.ndarray, z: float, config: OpticalConfig) -> np.ndarray:
    """Propagate a complex field by ``z`` metres with the angular-spectrum method."""
    field = np.asarray(field)
    if field.shape != config.shape:
        raise ShapeError(f"field shape {field.shape} does not match config {config.shape}")
    if not np.all(np.isfinite(field)):
        raise ShapeError("field contains non-finite values")
    spectrum = sfft.fft2(field.astype(np.complex128, copy=False))
    spectrum *= transfer_function(config, z)
    return sfft.ifft2(spectrum)
