"""Command-line front end: ``dihm <command> [options]``.

Commands: simulate, mission, reconstruct, detect, map, profile, pipeline.
Global options (accepted before or after the command): ``--config``,
``--seed``, ``--threads``, ``--out``. Errors are reported on one line as
``<ErrorClass>: <message>`` with a nonzero exit status.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import formats
from .config import METHODS, RunConfig, load_config, save_config
from .errors import DihmError, InputError, NormalizationWarning, ShadowDensityWarning
from .forward import generate_particle_field, synthesize_hologram
from .particles import detect
from .pipeline import backpropagate_stack, cached_operator, enhance_sequence, rihvr_reconstruct
from .pipeline.volume import VolumeStack
from .survey import (LAYOUTS, GridSpec, covering_path, depth_profile, dive_path, gaussian_smooth,
                     interpolate_map, sigmoid_depth_field, simulate_mission)

log = logging.getLogger("dihm")

EXIT_ERROR = 2
EXIT_IO = 3
EXIT_USAGE = 64


class UsageError(DihmError):
    """Bad command-line arguments."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _note(message: str) -> None:
    print(message, file=sys.stderr)


def _frame_path(directory: Path, stem: str, frame_id: int, suffix: str) -> Path:
    return directory / f"{stem}_{frame_id:04d}{suffix}"


def _map_frames(fn, items, threads):
    # results come back in input order whatever the completion order
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# -- commands ---------------------------------------------------------------

def cmd_simulate(cfg: RunConfig, out: Path, count: int | None = None, frames: int | None = None,
                 threads: int = 1) -> list[Path]:
    """Write ``frames`` synthetic holograms, the particle truth and the config."""
    sim = cfg.simulation
    count = sim.particle_count if count is None else count
    frames = sim.frames if frames is None else frames
    holo_dir = out / "holograms"
    holo_dir.mkdir(parents=True, exist_ok=True)

    def one(frame_id):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ShadowDensityWarning)
            pf = generate_particle_field(count, sim.diameter, cfg.optical, seed=[cfg.seed, frame_id],
                                         opacity=sim.opacity)
        holo = synthesize_hologram(pf, sim.noise_std, seed=[cfg.seed, frame_id, 1],
                                   timestamp=float(frame_id))
        path = _frame_path(holo_dir, "frame", frame_id, ".png")
        clipped = formats.write_hologram(path, holo)
        return frame_id, pf, path, clipped, [str(w.message) for w in caught]

    results = _map_frames(one, list(range(frames)), threads)
    for frame_id, _, _, clipped, msgs in results:
        for m in msgs:
            _note(f"warning: ShadowDensityWarning: frame {frame_id}: {m}")
        if clipped:
            _note(f"warning: frame {frame_id}: {clipped} pixels clipped to the 16-bit range")
    formats.write_truth(out / "truth.csv", [(fid, pf) for fid, pf, *_ in results])
    save_config(cfg, out / "config.json")
    return [r[2] for r in results]


def _collect(paths, suffixes) -> list[Path]:
    found = []
    for p in map(Path, paths):
        if p.is_dir():
            found.extend(sorted(q for q in p.iterdir() if q.suffix in suffixes))
        else:
            found.append(p)
    if not found:
        raise InputError("no input files given")
    return found


def cmd_reconstruct(cfg: RunConfig, inputs, out: Path, method: str | None = None,
                    threads: int = 1) -> list[Path]:
    """Background removal, enhancement and reconstruction of every frame."""
    method = method or cfg.reconstruction.method
    if method not in METHODS:
        raise InputError(f"unknown method {method!r}")
    paths = _collect(inputs, {".png"})
    holos = [formats.read_hologram(p) for p in paths]
    for p, h in zip(paths, holos):
        if h.shape != cfg.optical.shape:
            raise InputError(f"{p}: frame is {h.shape}, config expects {cfg.optical.shape}")
    enhanced, used_bg = enhance_sequence(holos, cfg.reconstruction.background_window)
    if not used_bg:
        _note(f"warning: fewer than {cfg.reconstruction.background_window} frames; "
              "assuming a flat background")
    vol_dir, mip_dir = out / "volumes", out / "mip"
    vol_dir.mkdir(parents=True, exist_ok=True)
    mip_dir.mkdir(parents=True, exist_ok=True)
    operator = cached_operator(cfg.optical, cfg.solver.precision) if method == "rihvr" else None

    def one(item):
        frame_id, holo = item
        if method == "rihvr":
            vol = rihvr_reconstruct(holo, cfg.optical, cfg.solver, operator)
        else:
            vol = backpropagate_stack(holo, cfg.optical)
        vpath = _frame_path(vol_dir, "frame", frame_id, ".dihmvol")
        formats.write_volume(vpath, vol)
        formats.write_mip(_frame_path(mip_dir, "frame", frame_id, ".png"), vol.data.max(axis=0))
        return vpath

    return _map_frames(one, list(enumerate(enhanced)), threads)


def cmd_detect(cfg: RunConfig, inputs, out: Path, threads: int = 1) -> Path:
    """Segment every volume (or MIP image) and write the detection table."""
    paths = _collect(inputs, {".dihmvol", ".png"})
    out.mkdir(parents=True, exist_ok=True)

    def one(item):
        frame_id, p = item
        if p.suffix == ".png":
            data, _ = formats.read_png16(p)
            if data.shape != cfg.optical.shape:
                raise InputError(f"{p}: image is {data.shape}, config expects {cfg.optical.shape}")
        else:
            data = formats.read_volume(p)
            if data.shape != cfg.optical.shape:
                raise InputError(f"{p}: volume is {data.shape}, config expects {cfg.optical.shape}")
        return detect(data, cfg.optical, cfg.segmentation, frame_id=frame_id)

    results = _map_frames(one, list(enumerate(paths)), threads)
    target = out / "detections.csv"
    formats.write_detections(target, results)
    for r in results:
        print(f"frame {r.frame_id}: count {r.count}, concentration {r.concentration:.6g} particles/uL")
    return target


def cmd_mission(cfg: RunConfig, out: Path, layout: str | None = None, kind: str = "map") -> Path:
    """Simulate a survey: a covering path over a plume layout, or a vertical dive."""
    out.mkdir(parents=True, exist_ok=True)
    sv = cfg.survey
    if kind == "dive":
        max_depth = sv.max_depth if sv.max_depth is not None else 5.5
        samples = simulate_mission(sigmoid_depth_field(), dive_path(max_depth), cfg.optical, cfg.seed)
    else:
        name = layout or sv.layout
        if name not in LAYOUTS:
            raise InputError(f"unknown layout {name!r}; choose from {', '.join(LAYOUTS)}")
        samples = simulate_mission(LAYOUTS[name](), covering_path(sv.path_points), cfg.optical, cfg.seed)
    target = out / "samples.csv"
    formats.write_samples(target, samples)
    return target


def cmd_map(cfg: RunConfig, samples_csv, out: Path, render: bool = False) -> Path:
    """Interpolate and smooth a concentration map from a samples table."""
    samples = formats.read_samples(samples_csv)
    sv = cfg.survey
    spec = GridSpec(sv.grid_nx, sv.grid_ny, sv.origin, sv.cell_size)
    grid = gaussian_smooth(interpolate_map(samples, spec), sv.sigma_cells)
    out.mkdir(parents=True, exist_ok=True)
    target = out / "map.csv"
    formats.write_grid(target, out / "map.json", grid, {"sigma_cells": sv.sigma_cells})
    if render:
        _render_map(grid, samples, out / "map.png")
    return target


def _render_map(grid, samples, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    x0, y0 = grid.origin
    extent = (x0, x0 + grid.nx * grid.cell_size, y0, y0 + grid.ny * grid.cell_size)
    fig, ax = plt.subplots(figsize=(5, 4.5))
    im = ax.imshow(np.ma.masked_invalid(grid.values), origin="lower", extent=extent, cmap="viridis")
    xy = np.array([(s.x, s.y) for s in samples])
    c = np.array([s.concentration for s in samples])
    ax.scatter(xy[:, 0], xy[:, 1], c=c, s=12, cmap="viridis", edgecolors="k", linewidths=0.3)
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    fig.colorbar(im, ax=ax, label="particles/uL")
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def cmd_profile(cfg: RunConfig, samples_csv, out: Path) -> Path:
    """Bin samples by depth and write the profile table."""
    samples = formats.read_samples(samples_csv)
    if not samples:
        raise InputError(f"{samples_csv}: no samples")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NormalizationWarning)
        prof = depth_profile(samples, cfg.survey.bin_size, cfg.survey.max_depth)
    for w in caught:
        _note(f"warning: NormalizationWarning: {w.message}")
    out.mkdir(parents=True, exist_ok=True)
    target = out / "profile.csv"
    formats.write_profile(target, prof)
    return target


def cmd_pipeline(cfg: RunConfig, out: Path, threads: int = 1, method: str | None = None) -> None:
    """simulate -> reconstruct -> detect, plus mission -> map and dive -> profile."""
    holos = cmd_simulate(cfg, out / "simulate", threads=threads)
    vols = cmd_reconstruct(cfg, holos, out / "reconstruct", method, threads)
    cmd_detect(cfg, vols, out / "detect", threads)
    samples = cmd_mission(cfg, out / "mission")
    cmd_map(cfg, samples, out / "map")
    dive = cmd_mission(cfg, out / "dive", kind="dive")
    cmd_profile(cfg, dive, out / "profile")


# -- argument handling ------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="run configuration (JSON)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override config seed")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="frames processed in parallel")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = _Parser(prog="dihm", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="synthesize holograms")
    p.add_argument("--count", type=int, help="particles per frame")
    p.add_argument("--frames", type=int, help="number of holograms")

    p = sub.add_parser("mission", parents=[common], help="simulate survey samples")
    p.add_argument("--layout", choices=sorted(LAYOUTS))
    p.add_argument("--kind", choices=("map", "dive"), default="map")

    p = sub.add_parser("reconstruct", parents=[common], help="holograms to volumes")
    p.add_argument("inputs", nargs="+", help="hologram PNG files or directories")
    p.add_argument("--method", choices=METHODS)

    p = sub.add_parser("detect", parents=[common], help="volumes to detections")
    p.add_argument("inputs", nargs="+", help="volume files, MIP PNG files or directories")

    p = sub.add_parser("map", parents=[common], help="samples to concentration map")
    p.add_argument("samples", help="samples CSV")
    p.add_argument("--render", action="store_true", help="also write map.png")

    p = sub.add_parser("profile", parents=[common], help="samples to depth profile")
    p.add_argument("samples", help="samples CSV")

    p = sub.add_parser("pipeline", parents=[common], help="run every stage end to end")
    p.add_argument("--method", choices=METHODS)
    return parser


def run(argv=None) -> None:
    args = build_parser().parse_args(argv)
    opts = vars(args)
    logging.basicConfig(level=logging.DEBUG if opts.get("verbose") else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = load_config(opts.get("config"))
    if "seed" in opts:
        if args.seed < 0:
            raise UsageError("--seed must be >= 0")
        cfg = cfg.replace(seed=args.seed)
    threads = opts.get("threads", 1)
    if threads < 1:
        raise UsageError("--threads must be >= 1")
    out = Path(opts.get("out", "."))
    cmd = args.command
    if cmd == "simulate":
        cmd_simulate(cfg, out, args.count, args.frames, threads)
    elif cmd == "mission":
        cmd_mission(cfg, out, args.layout, args.kind)
    elif cmd == "reconstruct":
        cmd_reconstruct(cfg, args.inputs, out, args.method, threads)
    elif cmd == "detect":
        cmd_detect(cfg, args.inputs, out, threads)
    elif cmd == "map":
        cmd_map(cfg, args.samples, out, args.render)
    elif cmd == "profile":
        cmd_profile(cfg, args.samples, out)
    elif cmd == "pipeline":
        cmd_pipeline(cfg, out, threads, args.method)


def main(argv=None) -> int:
    try:
        run(argv)
    except UsageError as exc:
        print(f"UsageError: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DihmError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        detail = f"{exc.strerror}: {exc.filename}" if exc.strerror and exc.filename else str(exc)
        print(f"IOError: {detail}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
