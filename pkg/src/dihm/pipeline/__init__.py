"""Hologram sequence to 3D intensity volume."""

from .background import BACKGROUND_WINDOW, enhance, enhance_sequence, median_background
from .backprop import backpropagate_stack
from .operator import HolographyOperator, cached_operator
from .rihvr import SolverSettings, SolveResult, contrast_image, rihvr_reconstruct, rihvr_solve
from .tv import TVDual, fused_lasso_prox, total_variation, tv_prox
from .volume import VolumeStack

__all__ = [
    "BACKGROUND_WINDOW", "HolographyOperator", "SolveResult", "SolverSettings", "VolumeStack",
    "backpropagate_stack", "cached_operator", "contrast_image", "enhance", "enhance_sequence",
    "median_background", "rihvr_reconstruct", "rihvr_solve", "total_variation", "tv_prox", "TVDual", "fused_lasso_prox",
]
