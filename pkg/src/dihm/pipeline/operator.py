"""Linearised holographic forward model mapping a volume to a contrast image.

Each plane ``x_k`` of the volume is a contrast distribution that is propagated
from depth ``z_k`` to the sensor, where it interferes with the unscattered
reference wave; the recorded contrast is the sum of the real parts. The
interference kernel is radially symmetric in frequency, so both the operator
and its adjoint run on half-size real transforms.
"""

from __future__ import annotations

import functools

import numpy as np
import scipy.fft as sfft
from numba import njit

from ..errors import ShapeError
from ..optics import OpticalConfig, interference_kernel


@njit(cache=True, fastmath=True)
def _multiply_add(acc, spectrum, kernel):
    for i in range(acc.shape[0]):
        for j in range(acc.shape[1]):
            acc[i, j] += spectrum[i, j] * kernel[i, j]


@njit(cache=True, fastmath=True)
def _multiply(out, spectrum, kernel):
    for i in range(out.shape[0]):
        for j in range(out.shape[1]):
            out[i, j] = spectrum[i, j] * kernel[i, j]


class HolographyOperator:
    """``A x = sum_k Re(r_k* propagate(x_k, z_k))`` and its adjoint.

    ``r_k = exp(i 2 pi z_k / lambda)`` is the reference wave phase gathered
    over the same distance. ``A^T y`` applies ``Re(r_k propagate(y, -z_k))``
    to every plane; with a real, even kernel this is the same per-plane filter
    as the forward direction.
    """

    def __init__(self, config: OpticalConfig, dtype=np.float32, workers: int = 1):
        config.validate()
        self.config = config
        self.dtype = np.dtype(dtype)
        self.workers = workers
        self.image_shape = config.shape
        self.volume_shape = (len(config.z_planes),) + config.shape
        self.kernels = np.stack([interference_kernel(config, z, self.dtype)
                                 for z in config.z_planes])
        self._lipschitz = None

    def _check(self, arr, shape):
        if arr.shape != shape:
            raise ShapeError(f"expected shape {shape}, got {arr.shape}")

    def _spectrum(self, image):
        return sfft.rfft2(image.astype(self.dtype, copy=False), workers=self.workers)

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._check(x, self.volume_shape)
        acc = np.zeros(self.kernels.shape[1:], dtype=np.result_type(self.dtype, np.complex64))
        # planes are summed one at a time in a fixed order, so the result does
        # not depend on scheduling and the spectra stay cache sized
        for k in range(len(self.kernels)):
            _multiply_add(acc, self._spectrum(x[k]), self.kernels[k])
        return sfft.irfft2(acc, s=self.image_shape, workers=self.workers, overwrite_x=True)

    def adjoint(self, y: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        self._check(y, self.image_shape)
        if out is None:
            out = np.empty(self.volume_shape, dtype=self.dtype)
        spectrum = self._spectrum(y)
        tmp = np.empty_like(spectrum)
        for k in range(len(self.kernels)):
            _multiply(tmp, spectrum, self.kernels[k])
            out[k] = sfft.irfft2(tmp, s=self.image_shape, workers=self.workers, overwrite_x=True)
        return out

    def normal(self, x: np.ndarray) -> np.ndarray:
        return self.adjoint(self.forward(x))

    def lipschitz(self, n_iter: int = 10, seed: int = 0) -> float:
        """Largest eigenvalue of ``A^T A`` by power iteration (cached)."""
        if self._lipschitz is None or self._lipschitz[0] != n_iter:
            rng = np.random.default_rng(seed)
            x = rng.standard_normal(self.volume_shape).astype(self.dtype)
            x /= np.linalg.norm(x)
            estimate = 0.0
            for _ in range(n_iter):
                y = self.normal(x)
                estimate = float(np.vdot(x, y).real)
                x = y / np.linalg.norm(y)
            self._lipschitz = (n_iter, estimate)
        return self._lipschitz[1]

    def lipschitz_exact(self) -> float:
        """Closed form: ``A^T A`` is diagonal in frequency with rank-one blocks."""
        return float(np.max(np.sum(self.kernels.astype(np.float64) ** 2, axis=0)))


@functools.lru_cache(maxsize=2)
def cached_operator(config: OpticalConfig, dtype: str = "float32", workers: int = 1):
    return HolographyOperator(config, np.dtype(dtype), workers)
