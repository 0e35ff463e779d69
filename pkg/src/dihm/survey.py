"""Survey analytics: concentration maps, depth profiles and synthetic missions.

Horizontal coordinates and depths are in metres, concentrations in particles
per microlitre. Grids store ``values[row, col]`` with rows along y.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage as ndi
from scipy.interpolate import CloughTocher2DInterpolator
from scipy.spatial import QhullError

from .errors import ConfigurationError, InputError, NormalizationWarning
from .optics import OpticalConfig

log = logging.getLogger(__name__)

DEFAULT_GRID_CELLS = 50
DEFAULT_SIGMA_CELLS = 2.0
DEFAULT_BIN_SIZE = 0.5
TRUNCATE_SIGMAS = 4.0


@dataclass(frozen=True)
class SampleRecord:
    """One geo-tagged concentration measurement."""

    x: float
    y: float
    depth: float
    time: float
    concentration: float

    def __post_init__(self):
        vals = (self.x, self.y, self.depth, self.time, self.concentration)
        if not all(math.isfinite(v) for v in vals):
            raise InputError(f"sample has non-finite fields: {vals}")
        if self.depth < 0:
            raise InputError(f"depth must be >= 0, got {self.depth}")
        if self.concentration < 0:
            raise InputError(f"concentration must be >= 0, got {self.concentration}")


@dataclass(frozen=True)
class GridSpec:
    """Map grid. Unset ``origin``/``cell_size`` are fitted to the samples.

    A fitted grid has square cells sized so that ``nx`` by ``ny`` cells cover
    the bounding box of the samples.
    """

    nx: int = DEFAULT_GRID_CELLS
    ny: int = DEFAULT_GRID_CELLS
    origin: tuple[float, float] | None = None
    cell_size: float | None = None

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny or self.nx < 1 or self.ny < 1:
            raise ConfigurationError(f"grid needs positive integer cell counts, got {self.nx}x{self.ny}")
        if self.cell_size is not None and not self.cell_size > 0:
            raise ConfigurationError(f"cell_size must be positive, got {self.cell_size}")
        if self.origin is not None:
            object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    def resolve(self, xy: np.ndarray) -> "GridSpec":
        lo = xy.min(axis=0)
        span = xy.max(axis=0) - lo
        cell = self.cell_size
        if cell is None:
            cell = float(max(span[0] / self.nx, span[1] / self.ny))
            if not cell > 0:
                raise InputError("samples span zero area; cannot size grid cells")
        origin = self.origin if self.origin is not None else (float(lo[0]), float(lo[1]))
        return GridSpec(self.nx, self.ny, origin, cell)


@dataclass(frozen=True)
class ConcentrationGrid:
    """Gridded concentration; ``mask`` is True on valid cells, values NaN elsewhere."""

    origin: tuple[float, float]
    cell_size: float
    nx: int
    ny: int
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if not self.cell_size > 0:
            raise ConfigurationError(f"cell_size must be positive, got {self.cell_size}")
        values = np.asarray(self.values, dtype=float)
        mask = np.asarray(self.mask, dtype=bool)
        if values.shape != (self.ny, self.nx) or mask.shape != values.shape:
            raise InputError(f"grid arrays must have shape {(self.ny, self.nx)}")
        if not np.all(np.isfinite(values[mask])):
            raise InputError("grid values must be finite on valid cells")
        values = np.where(mask, values, np.nan)
        values.flags.writeable = False
        mask.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    def centers(self):
        """Cell-centre coordinate vectors ``(xc, yc)``."""
        xc = self.origin[0] + (np.arange(self.nx) + 0.5) * self.cell_size
        yc = self.origin[1] + (np.arange(self.ny) + 0.5) * self.cell_size
        return xc, yc

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        """``(row, col)`` of the cell containing a point (may lie off-grid)."""
        col = int(math.floor((x - self.origin[0]) / self.cell_size))
        row = int(math.floor((y - self.origin[1]) / self.cell_size))
        return row, col

    def argmax_cell(self) -> tuple[int, int]:
        if not self.mask.any():
            raise InputError("grid has no valid cells")
        filled = np.where(self.mask, self.values, -np.inf)
        row, col = np.unravel_index(int(np.argmax(filled)), filled.shape)
        return int(row), int(col)

    def sidecar(self) -> dict:
        return {"origin": list(self.origin), "cell_size": self.cell_size,
                "nx": self.nx, "ny": self.ny, "mask": self.mask.astype(int).tolist()}


@dataclass(frozen=True)
class DepthProfile:
    """Binned concentration against depth; missing statistics are NaN."""

    bin_edges: np.ndarray
    count: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    normalized: np.ndarray
    normalized_std: np.ndarray
    excluded: int = 0

    @property
    def n_bins(self) -> int:
        return len(self.bin_edges) - 1


@dataclass(frozen=True)
class PlumeSource:
    x: float
    y: float
    strength: float
    decay_length: float

    def __post_init__(self):
        if not self.strength >= 0:
            raise ConfigurationError(f"source strength must be >= 0, got {self.strength}")
        if not self.decay_length > 0:
            raise ConfigurationError(f"decay_length must be positive, got {self.decay_length}")


@dataclass(frozen=True)
class SourceLayout:
    """Steady plume sources. ``locus`` is the polyline the sources mark out."""

    sources: tuple[PlumeSource, ...] = ()
    name: str = "custom"
    locus: tuple[tuple[float, float], ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        if not self.locus:
            object.__setattr__(self, "locus", tuple((s.x, s.y) for s in self.sources))


def point_layout(x: float = 0.1, y: float = -0.1, strength: float = 10.0,
                 decay_length: float = 0.4) -> SourceLayout:
    return SourceLayout((PlumeSource(x, y, strength, decay_length),), "point")


def line_layout(start=(-0.8, -0.3), end=(0.8, 0.3), n_sources: int = 5, strength: float = 10.0,
                decay_length: float = 0.2) -> SourceLayout:
    """Equally spaced sources on a straight segment."""
    t = np.linspace(0.0, 1.0, n_sources)
    pts = np.outer(1 - t, start) + np.outer(t, end)
    return SourceLayout(tuple(PlumeSource(float(px), float(py), strength, decay_length) for px, py in pts),
                        "line", (tuple(start), tuple(end)))


def elbow_layout(corner=(0.5, -0.6), arm_a=(-1.0, -0.6), arm_b=(0.5, 0.4), n_sources: int = 6,
                 strength: float = 10.0, decay_length: float = 0.2) -> SourceLayout:
    """Sources evenly spaced along a bent two-segment path ``arm_a -> corner -> arm_b``.

    The default arms are three and two spacings long, so one source sits on
    the bend.
    """
    poly = np.array([arm_a, corner, arm_b], dtype=float)
    pts = _resample_polyline(poly, n_sources)
    return SourceLayout(tuple(PlumeSource(float(px), float(py), strength, decay_length) for px, py in pts),
                        "elbow", tuple(map(tuple, poly)))


LAYOUTS = {"point": point_layout, "line": line_layout, "elbow": elbow_layout}


def _resample_polyline(poly: np.ndarray, n: int) -> np.ndarray:
    seg = np.hypot(*np.diff(poly, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if n == 1 or s[-1] == 0:
        return poly[:1].repeat(n, axis=0)
    target = np.linspace(0.0, s[-1], n)
    return np.column_stack([np.interp(target, s, poly[:, 0]), np.interp(target, s, poly[:, 1])])


def locus_points(layout: SourceLayout, n: int = 50):
    """Points evenly spaced along the layout locus and unit normals there.

    At polyline vertices the normal bisects the two adjacent segment normals.
    """
    poly = np.asarray(layout.locus, dtype=float).reshape(-1, 2)
    pts = _resample_polyline(poly, n)
    if len(poly) < 2:
        return pts, np.zeros_like(pts)
    tangents = np.gradient(pts, axis=0)
    tangents /= np.maximum(np.hypot(*tangents.T), 1e-300)[:, None]
    normals = np.column_stack([-tangents[:, 1], tangents[:, 0]])
    return pts, normals


def plume_field(layout: SourceLayout, x, y):
    """Sum of Gaussian plumes ``strength * exp(-r^2 / (2 l^2))``; vectorised over x, y."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.zeros(np.broadcast(x, y).shape)
    for s in layout.sources:
        r2 = (x - s.x) ** 2 + (y - s.y) ** 2
        out += s.strength * np.exp(-r2 / (2.0 * s.decay_length**2))
    return out if out.ndim else float(out)


def sigmoid_depth_field(surface: float = 5.0, floor: float = 0.5, center: float = 3.0,
                        width: float = 0.4) -> Callable:
    """Concentration falling from ``surface`` to ``floor`` across a thermocline."""
    if width <= 0:
        raise ConfigurationError(f"width must be positive, got {width}")

    def f(x, y, depth):
        d = np.asarray(depth, dtype=float)
        return floor + (surface - floor) / (1.0 + np.exp((d - center) / width))

    return f


def covering_path(n_points: int = 200, bounds=(-1.2, 1.2, -1.2, 1.2), interval: float = 1.0,
                  depth: float = 0.0) -> np.ndarray:
    """Boustrophedon sweep of a rectangle; rows of ``(x, y, time, depth)``.

    The number of sweep lines is chosen so that sample spacing along and
    across lines is as even as possible.
    """
    if n_points < 1:
        raise InputError(f"n_points must be >= 1, got {n_points}")
    x0, x1, y0, y1 = bounds
    aspect = (y1 - y0) / (x1 - x0) if x1 > x0 else 1.0
    lines = max(1, int(round(math.sqrt(n_points * aspect / 2.0))))
    per_line = np.full(lines, n_points // lines)
    per_line[: n_points % lines] += 1
    rows = []
    ys = np.linspace(y0, y1, lines) if lines > 1 else np.array([(y0 + y1) / 2])
    for k, (yk, m) in enumerate(zip(ys, per_line)):
        xs = np.linspace(x0, x1, int(m))
        if k % 2:
            xs = xs[::-1]
        rows.extend((float(xv), float(yk)) for xv in xs)
    xy = np.array(rows)
    t = np.arange(n_points) * interval
    return np.column_stack([xy, t, np.full(n_points, float(depth))])


def dive_path(max_depth: float = 5.5, rate: float = 0.05, hold: float = 60.0,
              interval: float = 1.0, x: float = 0.0, y: float = 0.0) -> np.ndarray:
    """Descend at ``rate`` m/s, hold at ``max_depth``, ascend; rows of ``(x, y, time, depth)``."""
    if not (max_depth > 0 and rate > 0 and interval > 0 and hold >= 0):
        raise InputError("dive needs positive depth, rate and interval and non-negative hold")
    travel = max_depth / rate
    total = 2 * travel + hold
    t = np.arange(0.0, total + 0.5 * interval, interval)
    depth = np.clip(np.minimum(t * rate, (total - t) * rate), 0.0, max_depth)
    return np.column_stack([np.full_like(t, x), np.full_like(t, y), t, depth])


def simulate_mission(layout: SourceLayout | Callable, path, config: OpticalConfig,
                     seed: int = 0) -> list[SampleRecord]:
    """Replay a path through a steady field with Poisson particle counts.

    ``layout`` is a :class:`SourceLayout` or a callable ``f(x, y, depth)``.
    Path rows are ``(x, y, time)`` or ``(x, y, time, depth)``. Point ``i``
    draws from its own generator seeded with ``(seed, i)``, so records do not
    depend on evaluation order.
    """
    path = np.asarray(path, dtype=float)
    if path.ndim != 2 or path.shape[0] == 0 or path.shape[1] not in (3, 4):
        raise InputError("path must be a non-empty list of (x, y, time[, depth]) rows")
    depth = path[:, 3] if path.shape[1] == 4 else np.zeros(len(path))
    if isinstance(layout, SourceLayout):
        conc = np.asarray(plume_field(layout, path[:, 0], path[:, 1]), dtype=float)
    else:
        conc = np.asarray(layout(path[:, 0], path[:, 1], depth), dtype=float)
    if np.any(conc < 0) or not np.all(np.isfinite(conc)):
        raise InputError("field produced negative or non-finite concentrations")
    volume = config.sample_volume_ul
    records = []
    for i, (row, c, d) in enumerate(zip(path, np.broadcast_to(conc, depth.shape), depth)):
        count = np.random.default_rng([seed, i]).poisson(c * volume)
        records.append(SampleRecord(float(row[0]), float(row[1]), float(d), float(row[2]),
                                    float(count) / volume))
    return records


def _merge_duplicates(xy, values):
    uniq, inverse = np.unique(xy, axis=0, return_inverse=True)
    if len(uniq) == len(xy):
        return xy, values
    inverse = inverse.ravel()
    sums = np.bincount(inverse, weights=values)
    counts = np.bincount(inverse)
    log.debug("merged %d duplicate sample locations", len(xy) - len(uniq))
    return uniq, sums / counts


def interpolate_map(samples: Sequence[SampleRecord], grid: GridSpec | None = None) -> ConcentrationGrid:
    """Piecewise-cubic interpolation over the triangulated samples at cell centres.

    Cells outside the convex hull of the samples are masked. Repeated sample
    locations are averaged first.
    """
    grid = grid or GridSpec()
    if len(samples) < 4:
        raise InputError(f"need at least 4 samples to interpolate, got {len(samples)}")
    xy = np.array([(s.x, s.y) for s in samples], dtype=float)
    values = np.array([s.concentration for s in samples], dtype=float)
    xy, values = _merge_duplicates(xy, values)
    if len(xy) < 4:
        raise InputError(f"need at least 4 distinct sample locations, got {len(xy)}")
    centred = xy - xy.mean(axis=0)
    if np.linalg.matrix_rank(centred, tol=1e-12 * max(np.abs(centred).max(), 1e-300)) < 2:
        raise InputError("samples are collinear; a 2D map needs spread in both directions")
    spec = grid.resolve(xy)
    try:
        interp = CloughTocher2DInterpolator(xy, values, fill_value=np.nan)
    except QhullError as exc:
        raise InputError(f"sample triangulation failed: {exc}".splitlines()[0]) from None
    xc = spec.origin[0] + (np.arange(spec.nx) + 0.5) * spec.cell_size
    yc = spec.origin[1] + (np.arange(spec.ny) + 0.5) * spec.cell_size
    gx, gy = np.meshgrid(xc, yc)
    vals = interp(gx, gy)
    mask = np.isfinite(vals)
    return ConcentrationGrid(spec.origin, spec.cell_size, spec.nx, spec.ny, vals, mask)


def gaussian_smooth(grid: ConcentrationGrid, sigma_cells: float = DEFAULT_SIGMA_CELLS) -> ConcentrationGrid:
    """Normalised-convolution Gaussian filter restricted to valid cells.

    The kernel is truncated at 4 sigma and renormalised over valid cells, so
    every output is a convex combination of valid inputs. Grid edges are
    reflected, which keeps the total conserved on a fully valid grid.
    """
    if not (math.isfinite(sigma_cells) and sigma_cells > 0):
        raise ConfigurationError(f"sigma_cells must be positive, got {sigma_cells}")
    m = grid.mask.astype(float)
    filled = np.where(grid.mask, grid.values, 0.0)
    opts = dict(sigma=sigma_cells, truncate=TRUNCATE_SIGMAS, mode="reflect")
    num = ndi.gaussian_filter(filled, **opts)
    den = ndi.gaussian_filter(m, **opts)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = num / den
    out = np.where(grid.mask, out, np.nan)
    # clamp rounding spill so the convex-hull property holds exactly
    if grid.mask.any():
        lo, hi = grid.values[grid.mask].min(), grid.values[grid.mask].max()
        out[grid.mask] = np.clip(out[grid.mask], lo, hi)
    return ConcentrationGrid(grid.origin, grid.cell_size, grid.nx, grid.ny, out, grid.mask)


def depth_profile(samples: Sequence[SampleRecord], bin_size: float = DEFAULT_BIN_SIZE,
                  max_depth: float | None = None) -> DepthProfile:
    """Per-bin mean and sample standard deviation of concentration against depth.

    Bins are ``[k b, (k+1) b)`` with the last bin closed at ``max_depth``.
    Samples deeper than ``max_depth`` are left out. Bins with no samples have
    NaN statistics, and single-sample bins a NaN std. ``normalized`` divides by
    the surface-bin mean; if that bin is empty a :class:`NormalizationWarning`
    is issued and the normalised columns are NaN.
    """
    if not (math.isfinite(bin_size) and bin_size > 0):
        raise ConfigurationError(f"bin_size must be positive, got {bin_size}")
    if len(samples) == 0:
        raise InputError("no samples to profile")
    depth = np.array([s.depth for s in samples], dtype=float)
    conc = np.array([s.concentration for s in samples], dtype=float)
    if max_depth is None:
        max_depth = float(depth.max())
    if not max_depth >= 0:
        raise ConfigurationError(f"max_depth must be >= 0, got {max_depth}")
    n_bins = max(1, int(math.ceil(max_depth / bin_size - 1e-9)))
    edges = np.arange(n_bins + 1) * bin_size
    keep = depth <= max(max_depth, edges[-1])
    idx = np.clip(np.searchsorted(edges, depth[keep], side="right") - 1, 0, n_bins - 1)
    vals = conc[keep]

    count = np.bincount(idx, minlength=n_bins)
    total = np.bincount(idx, weights=vals, minlength=n_bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(count > 0, total / count, np.nan)
        dev = np.bincount(idx, weights=(vals - mean[idx]) ** 2, minlength=n_bins)
        std = np.where(count > 1, np.sqrt(dev / (count - 1)), np.nan)
    surface = mean[0]
    if count[0] == 0:
        warnings.warn("surface bin is empty; profile left un-normalised", NormalizationWarning,
                      stacklevel=2)
        norm = np.full(n_bins, np.nan)
        norm_std = np.full(n_bins, np.nan)
    elif surface == 0:
        warnings.warn("surface concentration is zero; profile left un-normalised",
                      NormalizationWarning, stacklevel=2)
        norm = np.full(n_bins, np.nan)
        norm_std = np.full(n_bins, np.nan)
    else:
        norm = mean / surface
        norm[0] = 1.0
        norm_std = std / surface
    return DepthProfile(edges, count, mean, std, norm, norm_std, int((~keep).sum()))


def ridge_offsets(grid: ConcentrationGrid, points: np.ndarray, normals: np.ndarray,
                  half_width: float, step_cells: float = 0.1) -> np.ndarray:
    """Distance from each locus point to the map maximum along its normal.

    The map is sampled bilinearly on a line of ``+-half_width`` metres through
    each point. Returns NaN where no valid cells lie on that line.
    """
    xc, yc = grid.centers()
    steps = np.arange(-half_width, half_width + 1e-12, step_cells * grid.cell_size)
    filled = np.where(grid.mask, grid.values, np.nan)
    out = np.full(len(points), np.nan)
    for k, (p, nvec) in enumerate(zip(points, normals)):
        line = p[None, :] + steps[:, None] * nvec[None, :]
        col = (line[:, 0] - xc[0]) / grid.cell_size
        row = (line[:, 1] - yc[0]) / grid.cell_size
        prof = ndi.map_coordinates(filled, [row, col], order=1, mode="constant", cval=np.nan)
        if np.all(np.isnan(prof)):
            continue
        out[k] = abs(steps[int(np.nanargmax(prof))])
    return out
