"""Reconstructed intensity volumes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError, ShapeError


@dataclass(frozen=True)
class VolumeStack:
    """Intensity volume of shape ``(n_planes, height, width)``.

    ``z`` holds the plane distances from the sensor in metres.
    """

    z: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.float64).ravel()
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ShapeError(f"volume data must be 3D, got shape {data.shape}")
        if data.shape[0] != z.size:
            raise ShapeError(f"{data.shape[0]} planes but {z.size} z values")
        if np.any(np.diff(z) <= 0):
            raise InputError("plane z values must be strictly increasing")
        if not np.all(np.isfinite(data)) or np.any(data < 0):
            raise InputError("volume intensities must be finite and non-negative")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "data", data)

    @property
    def n_planes(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[1:]

    @property
    def planes(self):
        """``(z, intensity)`` pairs in depth order."""
        return list(zip(self.z.tolist(), self.data))
