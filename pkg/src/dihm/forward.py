"""Synthetic in-line holograms of known 3D particle fields.

Particles are planar disks with amplitude transmittance ``1 - opacity``.
The collimated beam enters at the deepest particle plane and is propagated
plane by plane towards the sensor, so occlusion between particles is
multiplicative rather than linearised.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .errors import DomainError, ShadowDensityWarning
from .optics import OpticalConfig, transfer_function

SHADOW_DENSITY_LIMIT = 0.1
SUPERSAMPLE = 5


def shadow_density(number_density: float, path_length: float, diameter: float) -> float:
    """Non-dimensional shadow density ``n_x * L * d**2``.

    Values above :data:`SHADOW_DENSITY_LIMIT` are outside the regime where
    in-line holograms can be trusted.
    """
    for name, value in (("number_density", number_density),
                        ("path_length", path_length), ("diameter", diameter)):
        if not np.isfinite(value) or value < 0:
            raise DomainError(f"{name} must be finite and non-negative, got {value}")
    return float(number_density * path_length * diameter**2)


@dataclass(frozen=True)
class Hologram:
    """A recorded intensity frame, optionally geo-tagged with ``(x, y, depth)``."""

    intensity: np.ndarray
    timestamp: float = 0.0
    pose: tuple[float, float, float] | None = None

    def __post_init__(self):
        arr = np.asarray(self.intensity, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise DomainError(f"hologram must be a non-empty 2D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise DomainError("hologram intensity must be finite and non-negative")
        object.__setattr__(self, "intensity", arr)

    @property
    def shape(self):
        return self.intensity.shape

    @property
    def width(self):
        return self.intensity.shape[1]

    @property
    def height(self):
        return self.intensity.shape[0]


@dataclass(frozen=True)
class Particle:
    x: float
    y: float
    z: float
    diameter: float
    opacity: float = 1.0


@dataclass(frozen=True)
class ParticleField:
    particles: tuple[Particle, ...]
    config: OpticalConfig
    shadow_density: float = 0.0
    warning: str | None = field(default=None, compare=False)

    def __len__(self):
        return len(self.particles)

    def validate(self):
        cfg = self.config
        width, height = cfg.footprint
        for p in self.particles:
            if not (0 <= p.x <= width and 0 <= p.y <= height):
                raise DomainError(f"particle at ({p.x}, {p.y}) outside the sensor footprint")
            if not 0 <= p.z <= cfg.gap_depth:
                raise DomainError(f"particle depth {p.z} outside [0, {cfg.gap_depth}]")
            if p.diameter < cfg.pixel_pitch:
                raise DomainError(f"particle diameter {p.diameter} below pixel pitch")
            if not 0 < p.opacity <= 1:
                raise DomainError(f"opacity must be in (0, 1], got {p.opacity}")


def field_shadow_density(particles, config: OpticalConfig) -> float:
    # polydisperse fields use the mean squared diameter
    if not particles:
        return 0.0
    d2 = float(np.mean([p.diameter**2 for p in particles]))
    n_x = len(particles) / config.sample_volume_m3
    return shadow_density(n_x, config.gap_depth, np.sqrt(d2))


def _draw_diameters(rng, count, diameter_dist, pitch):
    if np.isscalar(diameter_dist):
        lo = hi = float(diameter_dist)
    else:
        lo, hi = (float(v) for v in diameter_dist)
        if hi < lo:
            raise DomainError(f"diameter range ({lo}, {hi}) is reversed")
    if lo < pitch:
        raise DomainError(f"diameter {lo} m is below the pixel pitch {pitch} m")
    if lo == hi:
        return np.full(count, lo)
    return rng.uniform(lo, hi, size=count)


def make_field(particles, config: OpticalConfig) -> ParticleField:
    """Wrap particles into a validated field, attaching a dense-field warning."""
    particles = tuple(particles)
    s_d = field_shadow_density(particles, config)
    message = None
    if s_d > SHADOW_DENSITY_LIMIT:
        message = f"shadow density {s_d:.3g} exceeds {SHADOW_DENSITY_LIMIT}"
        warnings.warn(message, ShadowDensityWarning, stacklevel=3)
    pf = ParticleField(particles, config, s_d, message)
    pf.validate()
    return pf


def generate_particle_field(count: int, diameter_dist, config: OpticalConfig,
                            seed: int = 0, opacity: float = 1.0) -> ParticleField:
    """Draw ``count`` particles uniformly in the imaging volume.

    ``diameter_dist`` is either a single diameter (monodisperse) or a
    ``(min, max)`` pair for a uniform distribution, in metres.
    """
    if count < 0:
        raise DomainError(f"count must be non-negative, got {count}")
    rng = np.random.default_rng(seed)
    width, height = config.footprint
    xs = rng.uniform(0, width, size=count)
    ys = rng.uniform(0, height, size=count)
    zs = rng.uniform(0, config.gap_depth, size=count)
    ds = _draw_diameters(rng, count, diameter_dist, config.pixel_pitch)
    particles = [Particle(float(x), float(y), float(z), float(d), float(opacity))
                 for x, y, z, d in zip(xs, ys, zs, ds)]
    return make_field(particles, config)


def disk_coverage(config: OpticalConfig, x: float, y: float, diameter: float):
    """Fractional pixel coverage of a disk, as ``(row_slice, col_slice, patch)``.

    Pixel ``(i, j)`` spans ``[j*p, (j+1)*p) x [i*p, (i+1)*p)``; coverage is
    estimated on a :data:`SUPERSAMPLE` x :data:`SUPERSAMPLE` sub-grid.
    """
    p = config.pixel_pitch
    r = diameter / 2
    j0 = max(int(np.floor((x - r) / p)), 0)
    j1 = min(int(np.ceil((x + r) / p)), config.sensor_width)
    i0 = max(int(np.floor((y - r) / p)), 0)
    i1 = min(int(np.ceil((y + r) / p)), config.sensor_height)
    if j1 <= j0 or i1 <= i0:
        return slice(0, 0), slice(0, 0), np.zeros((0, 0))
    sub = (np.arange(SUPERSAMPLE) + 0.5) / SUPERSAMPLE
    cx = ((np.arange(j0, j1)[:, None] + sub[None, :]) * p - x).ravel()
    cy = ((np.arange(i0, i1)[:, None] + sub[None, :]) * p - y).ravel()
    inside = (cy[:, None] ** 2 + cx[None, :] ** 2) <= r * r
    patch = inside.reshape(i1 - i0, SUPERSAMPLE, j1 - j0, SUPERSAMPLE).mean(axis=(1, 3))
    return slice(i0, i1), slice(j0, j1), patch


def transmittance(particles, config: OpticalConfig) -> np.ndarray:
    """Amplitude transmittance of a set of particles lying in one plane."""
    t = np.ones(config.shape)
    for p in particles:
        rows, cols, patch = disk_coverage(config, p.x, p.y, p.diameter)
        t[rows, cols] *= 1.0 - p.opacity * patch
    return t


def _propagate_spectrum(field, dz, config):
    if dz == 0:
        return field
    spectrum = sfft.fft2(field)
    spectrum *= transfer_function(config, dz)
    return sfft.ifft2(spectrum, overwrite_x=True)


def synthesize_hologram(field: ParticleField, noise_std: float = 0.0, seed: int = 0,
                        timestamp: float = 0.0, pose=None) -> Hologram:
    """Record the hologram of a particle field on the sensor at ``z = 0``.

    Particles sharing a depth are applied in the same plane. Additive Gaussian
    read noise is clamped so intensities stay non-negative.
    """
    field.validate()
    if noise_std < 0:
        raise DomainError(f"noise_std must be non-negative, got {noise_std}")
    cfg = field.config
    wave = np.ones(cfg.shape, dtype=np.complex128)
    by_depth: dict[float, list[Particle]] = {}
    for p in field.particles:
        by_depth.setdefault(p.z, []).append(p)
    current = max(by_depth) if by_depth else 0.0
    for z in sorted(by_depth, reverse=True):
        wave = _propagate_spectrum(wave, current - z, cfg)
        wave *= transmittance(by_depth[z], cfg)
        current = z
    wave = _propagate_spectrum(wave, current, cfg)
    intensity = wave.real**2 + wave.imag**2
    if noise_std > 0:
        rng = np.random.default_rng(seed)
        intensity = intensity + rng.normal(0.0, noise_std, size=intensity.shape)
        np.maximum(intensity, 0.0, out=intensity)
    return Hologram(intensity, timestamp=timestamp, pose=pose)
