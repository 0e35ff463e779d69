"""Regularised inverse volumetric reconstruction of an enhanced hologram.

Solves::

    min_{x >= 0}  0.5 * ||A x - b||^2 + l1 * ||x||_1 + l2 * TV(x)

with ``b = 1 - enhanced`` so particles are positive signals. The iteration is
an accelerated proximal gradient method. The fused-lasso proximal step is
approximated by a TV proximal step, then soft thresholding, then projection
onto ``x >= 0``. A candidate that raises the objective is rejected and the
momentum restarted, so accepted objectives never increase.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ..errors import ConfigurationError, NumericalDivergenceError, ShapeError
from ..forward import Hologram
from ..optics import OpticalConfig
from .operator import HolographyOperator, cached_operator
from .tv import TVDual, fused_lasso_prox, total_variation
from .volume import VolumeStack

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverSettings:
    """Solver knobs. ``None`` weights and step are derived from the data.

    Defaults: step ``1 / L`` with ``L`` from 10 power iterations on ``A^T A``;
    ``sparsity_weight = 2e-3 * max|b|``; ``smoothness_weight = 1e-3 * max|b|``.
    """

    max_iterations: int = 50
    step_size: float | None = None
    sparsity_weight: float | None = None
    smoothness_weight: float | None = None
    convergence_tol: float = 1e-4
    tv_iterations: int = 10
    power_iterations: int = 10
    sparsity_scale: float = 2e-3
    smoothness_scale: float = 1e-3
    precision: str = "float32"

    def __post_init__(self):
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ConfigurationError(f"max_iterations must be an integer >= 1, got {self.max_iterations}")
        if self.step_size is not None and not self.step_size > 0:
            raise ConfigurationError(f"step_size must be positive, got {self.step_size}")
        for name in ("sparsity_weight", "smoothness_weight"):
            val = getattr(self, name)
            if val is not None and not val >= 0:
                raise ConfigurationError(f"{name} must be non-negative, got {val}")
        for name in ("sparsity_scale", "smoothness_scale", "convergence_tol"):
            if not getattr(self, name) >= 0:
                raise ConfigurationError(f"{name} must be non-negative")
        if self.tv_iterations < 0 or self.power_iterations < 1:
            raise ConfigurationError("tv_iterations must be >= 0 and power_iterations >= 1")
        if self.precision not in ("float32", "float64"):
            raise ConfigurationError(f"precision must be float32 or float64, got {self.precision}")


@dataclass
class SolveResult:
    x: np.ndarray
    objective: list[float] = field(default_factory=list)
    iterations: int = 0
    restarts: int = 0
    converged: bool = False
    stalled: bool = False
    step_size: float = 0.0
    sparsity_weight: float = 0.0
    smoothness_weight: float = 0.0


@njit(cache=True, fastmath=True)
def _gradient_step(y, g, step):
    # g <- y - step * g
    gf = g.ravel()
    yf = y.ravel()
    for i in range(gf.size):
        gf[i] = yf[i] - step * gf[i]


@njit(cache=True, fastmath=True)
def _extrapolate(x_new, x, beta, out):
    a = x_new.ravel()
    b = x.ravel()
    o = out.ravel()
    for i in range(o.size):
        o[i] = a[i] + beta * (a[i] - b[i])


def objective_terms(residual, l1_sum, tv, l1, l2):
    data = 0.5 * float(np.dot(residual.ravel().astype(np.float64), residual.ravel().astype(np.float64)))
    return data + l1 * l1_sum + l2 * tv


def fused_lasso_objective(operator: HolographyOperator, x, b, l1, l2) -> float:
    """Objective value at ``x`` (``x`` assumed non-negative)."""
    r = operator.forward(x) - b
    return objective_terms(r, float(np.sum(x, dtype=np.float64)), total_variation(x), l1, l2)


def rihvr_solve(b: np.ndarray, operator: HolographyOperator,
                settings: SolverSettings | None = None) -> SolveResult:
    """Run the restarted accelerated proximal gradient solver on contrast ``b``."""
    settings = settings or SolverSettings()
    dtype = operator.dtype
    if b.shape != operator.image_shape:
        raise ShapeError(f"data shape {b.shape} does not match operator {operator.image_shape}")
    b = b.astype(dtype)
    scale = float(np.max(np.abs(b))) if b.size else 0.0
    l1 = settings.sparsity_weight if settings.sparsity_weight is not None else settings.sparsity_scale * scale
    l2 = settings.smoothness_weight if settings.smoothness_weight is not None else settings.smoothness_scale * scale
    step = settings.step_size or 1.0 / operator.lipschitz(settings.power_iterations)
    t_ = dtype.type

    shape = operator.volume_shape
    x = np.zeros(shape, dtype)
    y = np.zeros(shape, dtype)
    g = np.empty(shape, dtype)  # gradient, then the candidate iterate
    ax = np.zeros(operator.image_shape, dtype)
    ay = ax.copy()
    dual = TVDual(shape, dtype)
    fval = objective_terms(-b, 0.0, 0.0, l1, l2)
    result = SolveResult(x, [fval], step_size=step, sparsity_weight=l1, smoothness_weight=l2)
    momentum = 1.0
    fresh = True  # no momentum in the current y

    for it in range(1, settings.max_iterations + 1):
        operator.adjoint(ay - b, out=g)
        _gradient_step(y, g, t_(step))
        x_new, l1_sum = fused_lasso_prox(g, step * l1, step * l2, settings.tv_iterations, dual, out=g)
        ax_new = operator.forward(x_new)
        f_new = objective_terms(ax_new - b, l1_sum, total_variation(x_new), l1, l2)
        result.iterations = it
        if not np.isfinite(f_new):
            raise NumericalDivergenceError(it)
        if f_new > fval:
            result.restarts += 1
            result.objective.append(fval)
            if fresh:
                # even a momentum-free step fails to descend: nothing left to gain
                result.stalled = True
                log.debug("rihvr stalled at iteration %d", it)
                break
            momentum = 1.0
            fresh = True
            y[...] = x
            ay[...] = ax
            continue
        next_momentum = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * momentum**2))
        beta = (momentum - 1.0) / next_momentum
        momentum = next_momentum
        fresh = beta == 0.0
        _extrapolate(x_new, x, t_(beta), y)
        ay = ax_new + t_(beta) * (ax_new - ax)
        x, g = x_new, x
        ax = ax_new
        change = abs(fval - f_new)
        denom = abs(fval)
        fval = f_new
        result.objective.append(fval)
        if change <= settings.convergence_tol * denom or denom == 0.0:
            result.converged = True
            break
    result.x = x
    log.debug("rihvr: %d iterations, %d restarts, objective %.6g", result.iterations,
              result.restarts, fval)
    return result


def contrast_image(enhanced: Hologram) -> np.ndarray:
    """Particles as positive signals: ``1 - enhanced``."""
    return 1.0 - enhanced.intensity


def rihvr_reconstruct(enhanced: Hologram, config: OpticalConfig,
                      settings: SolverSettings | None = None,
                      operator: HolographyOperator | None = None) -> VolumeStack:
    """Reconstruct a non-negative volume from an enhanced hologram."""
    settings = settings or SolverSettings()
    if enhanced.shape != config.shape:
        raise ShapeError(f"hologram {enhanced.shape} does not match config {config.shape}")
    if operator is None:
        operator = cached_operator(config, settings.precision)
    result = rihvr_solve(contrast_image(enhanced), operator, settings)
    return VolumeStack(np.asarray(config.z_planes), result.x)
