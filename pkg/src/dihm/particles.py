"""Particle detection and counting on reconstructed volumes.

The chain is: maximum intensity projection, relative threshold, binary
closing, connected-component labelling, then per-component measurements.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage as ndi

from .errors import InputError, ShapeError
from .optics import OpticalConfig
from .pipeline.volume import VolumeStack

THRESHOLD_FRACTION = 0.25


@dataclass(frozen=True)
class SegmentationParams:
    threshold_fraction: float = THRESHOLD_FRACTION
    closing_radius: int = 1
    connectivity: int = 8
    min_component_size: int = 2

    def __post_init__(self):
        if not 0 < self.threshold_fraction <= 1:
            raise InputError(f"threshold_fraction must be in (0, 1], got {self.threshold_fraction}")
        if self.closing_radius < 0:
            raise InputError(f"closing_radius must be >= 0, got {self.closing_radius}")
        if self.connectivity not in (4, 8):
            raise InputError(f"connectivity must be 4 or 8, got {self.connectivity}")
        if self.min_component_size < 1:
            raise InputError(f"min_component_size must be >= 1, got {self.min_component_size}")


@dataclass(frozen=True)
class Detection:
    """One segmented particle. Positions in metres, ``z_estimate`` may be NaN for 2D input."""

    centroid_x: float
    centroid_y: float
    z_estimate: float
    pixel_area: int
    equivalent_diameter: float
    peak_intensity: float


@dataclass(frozen=True)
class FrameResult:
    detections: tuple[Detection, ...]
    concentration: float
    pose: tuple[float, float, float] | None = None
    timestamp: float = 0.0
    frame_id: int = 0

    @property
    def count(self) -> int:
        return len(self.detections)


class BinaryMask(NamedTuple):
    mask: np.ndarray
    no_signal: bool


def max_intensity_projection(volume: VolumeStack) -> np.ndarray:
    if volume.n_planes == 0:
        raise InputError("cannot project an empty volume")
    return volume.data.max(axis=0)


def binarize(image: np.ndarray, fraction: float = THRESHOLD_FRACTION) -> BinaryMask:
    """Pixels at or above ``fraction`` of the image maximum.

    An image without a positive maximum yields an empty mask flagged as
    ``no_signal`` instead of raising.
    """
    image = np.asarray(image)
    peak = float(image.max()) if image.size else 0.0
    if not peak > 0:
        return BinaryMask(np.zeros(image.shape, dtype=bool), True)
    return BinaryMask(image >= fraction * peak, False)


def disk(radius: int) -> np.ndarray:
    # digital disk x^2 + y^2 <= r(r+1): the 3x3 square at r=1, so a closing
    # bridges one-pixel gaps in any direction
    r = int(radius)
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return yy**2 + xx**2 <= r * (r + 1)


def morphological_close(mask: np.ndarray, radius_px: int = 1) -> np.ndarray:
    """Binary closing with a disk; the image is treated as zero-padded."""
    mask = np.asarray(mask, dtype=bool)
    if radius_px < 0:
        raise InputError(f"radius_px must be >= 0, got {radius_px}")
    if radius_px == 0:
        return mask.copy()
    se = disk(radius_px)
    pad = 2 * radius_px
    padded = np.pad(mask, pad)
    closed = ndi.binary_erosion(ndi.binary_dilation(padded, se), se)
    return closed[pad:-pad, pad:-pad]


def connected_components(mask: np.ndarray, connectivity: int = 8):
    """Label foreground regions; labels follow first appearance in row-major order.

    Returns ``(labels, count)``.
    """
    mask = np.asarray(mask, dtype=bool)
    if connectivity not in (4, 8):
        raise InputError(f"connectivity must be 4 or 8, got {connectivity}")
    structure = ndi.generate_binary_structure(2, 1 if connectivity == 4 else 2)
    labels, count = ndi.label(mask, structure)
    if count:
        found, first = np.unique(labels.ravel(), return_index=True)
        order = np.argsort(first[found > 0])
        remap = np.zeros(count + 1, dtype=labels.dtype)
        remap[found[found > 0][order]] = np.arange(1, count + 1)
        labels = remap[labels]
    return labels, int(count)


def remove_small_components(labels: np.ndarray, min_size: int):
    """Drop components smaller than ``min_size`` pixels and relabel in order."""
    if min_size <= 1 or labels.max() == 0:
        return labels, int(labels.max())
    sizes = np.bincount(labels.ravel())
    keep = sizes >= min_size
    keep[0] = False
    return _relabel(labels, keep)


def _relabel(labels, keep):
    remap = np.zeros(keep.size, dtype=labels.dtype)
    remap[keep] = np.arange(1, int(keep.sum()) + 1)
    return remap[labels], int(keep.sum())


def measure(labels: np.ndarray, volume: VolumeStack | np.ndarray,
            config: OpticalConfig) -> list[Detection]:
    """Centroid, area, equivalent diameter, peak and depth of each component.

    ``volume`` may be a :class:`VolumeStack` or an already projected 2D image;
    in the latter case ``z_estimate`` is NaN.
    """
    if isinstance(volume, VolumeStack):
        mip = max_intensity_projection(volume)
        data, z = volume.data, volume.z
    else:
        mip = np.asarray(volume)
        data = z = None
    if labels.shape != mip.shape:
        raise ShapeError(f"labels {labels.shape} and volume {mip.shape} differ")
    n = int(labels.max())
    if n == 0:
        return []
    index = np.arange(1, n + 1)
    rows, cols = np.indices(labels.shape)
    weights = mip.astype(np.float64)
    mass = ndi.sum(weights, labels, index)
    area = ndi.sum(np.ones_like(weights), labels, index)
    with np.errstate(invalid="ignore", divide="ignore"):
        cy = ndi.sum(rows * weights, labels, index) / mass
        cx = ndi.sum(cols * weights, labels, index) / mass
    # components without intensity fall back to the plain centroid
    flat = ~(mass > 0)
    if flat.any():
        cy[flat] = (ndi.sum(rows, labels, index) / area)[flat]
        cx[flat] = (ndi.sum(cols, labels, index) / area)[flat]
    peak = ndi.maximum(weights, labels, index)
    pitch = config.pixel_pitch
    out = []
    for k in range(n):
        if data is not None:
            i = min(max(int(round(cy[k])), 0), labels.shape[0] - 1)
            j = min(max(int(round(cx[k])), 0), labels.shape[1] - 1)
            z_est = float(z[int(np.argmax(data[:, i, j]))])
        else:
            z_est = float("nan")
        a = int(area[k])
        out.append(Detection(
            centroid_x=float((cx[k] + 0.5) * pitch),
            centroid_y=float((cy[k] + 0.5) * pitch),
            z_estimate=z_est,
            pixel_area=a,
            equivalent_diameter=float(2 * np.sqrt(a / np.pi) * pitch),
            peak_intensity=float(peak[k]),
        ))
    return out


def count_to_concentration(count: int, config: OpticalConfig) -> float:
    """Particles per microlitre of imaged sample volume."""
    if count < 0:
        raise InputError(f"count must be non-negative, got {count}")
    return count / config.sample_volume_ul


def detect(volume: VolumeStack | np.ndarray, config: OpticalConfig,
           params: SegmentationParams | None = None, *, frame_id: int = 0,
           timestamp: float = 0.0, pose=None) -> FrameResult:
    """Full detection chain on one reconstructed volume (or its projection)."""
    params = params or SegmentationParams()
    mip = max_intensity_projection(volume) if isinstance(volume, VolumeStack) else np.asarray(volume)
    mask, _ = binarize(mip, params.threshold_fraction)
    mask = morphological_close(mask, params.closing_radius)
    labels, _ = connected_components(mask, params.connectivity)
    labels, _ = remove_small_components(labels, params.min_component_size)
    dets = tuple(measure(labels, volume, config))
    return FrameResult(dets, count_to_concentration(len(dets), config), pose, timestamp, frame_id)
