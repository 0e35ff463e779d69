"""Background estimation and hologram enhancement."""

from __future__ import annotations

import numpy as np

from ..errors import InputError, ShapeError
from ..forward import Hologram

BACKGROUND_WINDOW = 5


def _stack(frames):
    shapes = {f.shape for f in frames}
    if len(shapes) > 1:
        raise InputError(f"frames have mixed dimensions: {sorted(shapes)}")
    return np.stack([f.intensity for f in frames])


def median_background(frames, window: int = BACKGROUND_WINDOW, center: int | None = None) -> Hologram:
    """Per-pixel median of ``window`` frames.

    By default the first ``window`` frames are used. With ``center`` the window
    is centred on that frame index and shifted to stay inside the sequence.
    Even windows take the lower median, so the result is always one of the
    recorded values.
    """
    frames = list(frames)
    if window < 1:
        raise InputError(f"window must be >= 1, got {window}")
    if len(frames) < window:
        raise InputError(f"median background needs {window} frames, got {len(frames)}")
    if center is None:
        start = 0
    else:
        start = min(max(center - window // 2, 0), len(frames) - window)
    chosen = frames[start:start + window]
    stack = _stack(chosen)
    k = (window - 1) // 2
    med = np.partition(stack, k, axis=0)[k]
    mid = chosen[window // 2]
    return Hologram(med, timestamp=mid.timestamp, pose=mid.pose)


def enhance(hologram: Hologram, background: Hologram) -> Hologram:
    """Divide out the background; particle-free regions end up near 1."""
    if hologram.shape != background.shape:
        raise ShapeError(f"hologram {hologram.shape} and background {background.shape} differ")
    bg = background.intensity
    eps = 1e-6 * float(bg.mean())
    if eps <= 0:
        eps = np.finfo(float).tiny
    out = hologram.intensity / np.maximum(bg, eps)
    return Hologram(out, timestamp=hologram.timestamp, pose=hologram.pose)


def enhance_sequence(frames, window: int = BACKGROUND_WINDOW):
    """Enhance every frame against a median of its neighbours.

    Returns the enhanced frames and whether a real background was used.
    With fewer than ``window`` frames the background is taken as flat.
    """
    frames = list(frames)
    if not frames:
        return [], False
    if len({f.shape for f in frames}) > 1:
        raise InputError("frames have mixed dimensions")
    if len(frames) < window:
        return [Hologram(f.intensity / max(float(f.intensity.mean()), np.finfo(float).tiny),
                         f.timestamp, f.pose) for f in frames], False
    return [enhance(f, median_background(frames, window, center=i))
            for i, f in enumerate(frames)], True
