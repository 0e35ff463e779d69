"""Single-shot refocusing of an enhanced hologram."""

from __future__ import annotations

import numpy as np

from ..forward import Hologram
from ..optics import OpticalConfig, propagate
from .volume import VolumeStack


def backpropagate_stack(enhanced: Hologram, config: OpticalConfig) -> VolumeStack:
    """Refocus to every plane in ``config.z_planes``.

    The square root of the enhanced intensity is used as a zero-phase field
    and propagated back by ``-z``; each plane stores ``|field|**2``.
    """
    config.validate()
    amplitude = np.sqrt(enhanced.intensity).astype(np.complex128)
    planes = []
    for z in config.z_planes:
        f = propagate(amplitude, -z, config)
        planes.append(f.real**2 + f.imag**2)
    return VolumeStack(np.asarray(config.z_planes), np.stack(planes))
