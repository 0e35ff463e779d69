"""Run configuration: every tunable of a CLI run in one JSON document.

Sections mirror the library types. Unknown keys at any level raise
:class:`~dihm.errors.ConfigurationError` so that typos cannot pass silently.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError
from .optics import OpticalConfig
from .particles import SegmentationParams
from .pipeline.background import BACKGROUND_WINDOW
from .pipeline.rihvr import SolverSettings
from .survey import DEFAULT_BIN_SIZE, DEFAULT_GRID_CELLS, DEFAULT_SIGMA_CELLS

METHODS = ("backprop", "rihvr")


@dataclass(frozen=True)
class SimulationSettings:
    particle_count: int = 50
    diameter: float | tuple[float, float] = 20e-6
    noise_std: float = 0.01
    frames: int = 5
    opacity: float = 1.0

    def __post_init__(self):
        if isinstance(self.diameter, (list, tuple)):
            object.__setattr__(self, "diameter", tuple(float(d) for d in self.diameter))
            if len(self.diameter) != 2:
                raise ConfigurationError("diameter range must be [min, max]")
        if self.particle_count < 0 or self.frames < 0:
            raise ConfigurationError("particle_count and frames must be >= 0")
        if not self.noise_std >= 0:
            raise ConfigurationError(f"noise_std must be >= 0, got {self.noise_std}")


@dataclass(frozen=True)
class ReconstructionSettings:
    method: str = "rihvr"
    background_window: int = BACKGROUND_WINDOW

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.background_window < 1:
            raise ConfigurationError("background_window must be >= 1")


@dataclass(frozen=True)
class SurveySettings:
    grid_nx: int = DEFAULT_GRID_CELLS
    grid_ny: int = DEFAULT_GRID_CELLS
    cell_size: float | None = None
    origin: tuple[float, float] | None = None
    sigma_cells: float = DEFAULT_SIGMA_CELLS
    bin_size: float = DEFAULT_BIN_SIZE
    max_depth: float | None = None
    layout: str = "point"
    path_points: int = 200

    def __post_init__(self):
        if self.origin is not None:
            object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        if not self.sigma_cells > 0 or not self.bin_size > 0:
            raise ConfigurationError("sigma_cells and bin_size must be positive")
        if self.path_points < 1:
            raise ConfigurationError("path_points must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    optical: OpticalConfig = field(default_factory=OpticalConfig)
    solver: SolverSettings = field(default_factory=SolverSettings)
    segmentation: SegmentationParams = field(default_factory=SegmentationParams)
    survey: SurveySettings = field(default_factory=SurveySettings)
    simulation: SimulationSettings = field(default_factory=SimulationSettings)
    reconstruction: ReconstructionSettings = field(default_factory=ReconstructionSettings)
    seed: int = 0

    _SECTIONS = {
        "solver": SolverSettings,
        "segmentation": SegmentationParams,
        "survey": SurveySettings,
        "simulation": SimulationSettings,
        "reconstruction": ReconstructionSettings,
    }

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigurationError("config must be a JSON object")
        known = {"optical", "seed", *cls._SECTIONS}
        _reject_unknown(data, known, "config")
        kwargs = {}
        if "optical" in data:
            opt = dict(_section(data, "optical"))
            _reject_unknown(opt, {f.name for f in dataclasses.fields(OpticalConfig)}, "optical")
            if "z_planes" in opt and opt["z_planes"] is not None:
                opt["z_planes"] = tuple(opt["z_planes"])
            kwargs["optical"] = _build(OpticalConfig, opt, "optical")
        for name, typ in cls._SECTIONS.items():
            if name in data:
                sec = _section(data, name)
                _reject_unknown(sec, {f.name for f in dataclasses.fields(typ)}, name)
                kwargs[name] = _build(typ, sec, name)
        if "seed" in data:
            seed = data["seed"]
            if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
                raise ConfigurationError(f"seed must be a non-negative integer, got {seed!r}")
            kwargs["seed"] = seed
        return cls(**kwargs)

    def to_dict(self) -> dict:
        out = {"optical": self.optical.to_dict()}
        for name in self._SECTIONS:
            out[name] = _jsonable(dataclasses.asdict(getattr(self, name)))
        out["seed"] = self.seed
        return out

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def _section(data, name):
    sec = data[name]
    if not isinstance(sec, dict):
        raise ConfigurationError(f"config section {name!r} must be an object")
    return sec


def _reject_unknown(data, known, where):
    extra = sorted(set(data) - set(known))
    if extra:
        raise ConfigurationError(f"unknown key(s) in {where}: {', '.join(extra)}")


def _build(typ, values, where):
    try:
        return typ(**values)
    except ConfigurationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"invalid {where} section: {exc}") from None


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config is not valid JSON: {exc}") from None
    return RunConfig.from_dict(data)


def save_config(config: RunConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")
