"""Digital in-line holographic microscopy: simulation, reconstruction, counting and survey maps."""

from .errors import (ConfigurationError, DihmError, DomainError, FormatError, InputError,
                     NormalizationWarning, NumericalDivergenceError, ShadowDensityWarning, ShapeError)
from .forward import (Hologram, Particle, ParticleField, generate_particle_field, shadow_density,
                      synthesize_hologram)
from .optics import OpticalConfig, propagate, transfer_function
from .particles import Detection, FrameResult, SegmentationParams, detect
from .pipeline import (SolverSettings, VolumeStack, backpropagate_stack, enhance, median_background,
                       rihvr_reconstruct)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "Detection", "DihmError", "DomainError", "FormatError", "FrameResult",
    "Hologram", "InputError", "NormalizationWarning", "NumericalDivergenceError", "OpticalConfig",
    "Particle", "ParticleField", "SegmentationParams", "ShadowDensityWarning", "ShapeError",
    "SolverSettings", "VolumeStack", "backpropagate_stack", "detect", "enhance",
    "generate_particle_field", "median_background", "propagate", "rihvr_reconstruct",
    "shadow_density", "synthesize_hologram", "transfer_function",
]
