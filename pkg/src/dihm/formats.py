"""On-disk formats: 16-bit PNG images, binary volumes and CSV tables.

Holograms are 16-bit grayscale PNG files with intensity 1.0 stored as 32768.
The scale, timestamp and pose travel in PNG text chunks.

Volume files are laid out as::

    b"DIHMVOL1"                 8-byte magic
    uint32 little endian        length n of the JSON header in bytes
    n bytes UTF-8 JSON          {"shape": [nz, ny, nx], "z": [...], "dtype": "<f4", "order": "C"}
    nz*ny*nx float32 LE values  row-major, plane after plane
"""

from __future__ import annotations

import csv
import json
import math
import struct
from pathlib import Path

import numpy as np
from PIL import Image, PngImagePlugin

from .errors import FormatError, InputError
from .forward import Hologram, Particle
from .particles import Detection, FrameResult
from .pipeline.volume import VolumeStack
from .survey import ConcentrationGrid, DepthProfile, SampleRecord

HOLOGRAM_SCALE = 32768.0
VOLUME_MAGIC = b"DIHMVOL1"
_U16_MAX = 65535

SAMPLE_COLUMNS = ("x_m", "y_m", "depth_m", "time_s", "conc_per_uL")
DETECTION_COLUMNS = ("frame_id", "centroid_x_m", "centroid_y_m", "z_m", "pixel_area",
                     "eq_diameter_m", "peak_intensity")
TRUTH_COLUMNS = ("frame_id", "x_m", "y_m", "z_m", "diameter_m", "opacity")
PROFILE_COLUMNS = ("bin_lo_m", "bin_hi_m", "n", "mean", "std", "normalized")


def fmt(value) -> str:
    """Shortest round-trip text for a number; NaN becomes an empty field."""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return ""
    return repr(value)


# -- images -----------------------------------------------------------------

def write_png16(path, array: np.ndarray, scale: float, meta: dict | None = None) -> int:
    """Store ``round(array * scale)`` as 16-bit grayscale; returns clipped pixel count."""
    scaled = np.rint(np.asarray(array, dtype=np.float64) * scale)
    clipped = int(np.count_nonzero((scaled < 0) | (scaled > _U16_MAX)))
    pixels = np.clip(scaled, 0, _U16_MAX).astype("<u2")
    info = PngImagePlugin.PngInfo()
    info.add_text("dihm_scale", repr(float(scale)))
    for key, val in (meta or {}).items():
        info.add_text(f"dihm_{key}", json.dumps(val))
    Image.fromarray(pixels).save(path, format="PNG", pnginfo=info)
    return clipped


def read_png16(path):
    """Return ``(values, meta)`` with values divided by the stored scale."""
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode not in ("I;16", "I;16B", "I;16L", "I", "L"):
                raise FormatError(f"{path}: unsupported PNG mode {img.mode}", 0)
            pixels = np.array(img, dtype=np.float64)
            text = dict(getattr(img, "text", {}) or {})
    except FormatError:
        raise
    except (OSError, SyntaxError, ValueError) as exc:
        raise FormatError(f"{path}: not a readable PNG ({exc})", 0) from None
    scale = float(text.pop("dihm_scale", HOLOGRAM_SCALE))
    meta = {}
    for key, val in text.items():
        if key.startswith("dihm_"):
            try:
                meta[key[5:]] = json.loads(val)
            except json.JSONDecodeError:
                meta[key[5:]] = val
    return pixels / scale, meta


def write_hologram(path, hologram: Hologram) -> int:
    meta = {"timestamp": hologram.timestamp}
    if hologram.pose is not None:
        meta["pose"] = list(hologram.pose)
    return write_png16(path, hologram.intensity, HOLOGRAM_SCALE, meta)


def read_hologram(path) -> Hologram:
    values, meta = read_png16(path)
    pose = meta.get("pose")
    return Hologram(values, timestamp=float(meta.get("timestamp", 0.0)),
                    pose=tuple(pose) if pose is not None else None)


def write_mip(path, mip: np.ndarray) -> None:
    peak = float(np.max(mip)) if mip.size else 0.0
    scale = _U16_MAX / peak if peak > 0 else 1.0
    write_png16(path, mip, scale, {"kind": "mip"})


# -- volumes ----------------------------------------------------------------

def write_volume(path, volume: VolumeStack) -> None:
    data = np.ascontiguousarray(volume.data, dtype="<f4")
    header = json.dumps({"shape": list(data.shape), "z": [float(z) for z in volume.z],
                         "dtype": "<f4", "order": "C"}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(VOLUME_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(data.tobytes(order="C"))


def read_volume(path) -> VolumeStack:
    raw = Path(path).read_bytes()
    n_magic = len(VOLUME_MAGIC)
    if raw[:n_magic] != VOLUME_MAGIC:
        raise FormatError(f"{path}: bad magic, not a volume file", 0)
    if len(raw) < n_magic + 4:
        raise FormatError(f"{path}: truncated header length", n_magic)
    (hlen,) = struct.unpack_from("<I", raw, n_magic)
    start = n_magic + 4
    if len(raw) < start + hlen:
        raise FormatError(f"{path}: header runs past end of file", start)
    try:
        header = json.loads(raw[start:start + hlen].decode("utf-8"))
        shape = tuple(int(n) for n in header["shape"])
        z = np.asarray(header["z"], dtype=float)
        dtype = header.get("dtype", "<f4")
        order = header.get("order", "C")
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: malformed header ({exc})", start) from None
    if dtype != "<f4" or order != "C" or len(shape) != 3:
        raise FormatError(f"{path}: unsupported layout dtype={dtype} order={order} shape={shape}", start)
    offset = start + hlen
    expected = int(np.prod(shape)) * 4
    if len(raw) - offset != expected:
        raise FormatError(f"{path}: expected {expected} data bytes, found {len(raw) - offset}",
                          offset + min(expected, len(raw) - offset))
    data = np.frombuffer(raw, dtype="<f4", count=int(np.prod(shape)), offset=offset).reshape(shape)
    try:
        return VolumeStack(z, data.copy())
    except (InputError, ValueError) as exc:
        raise FormatError(f"{path}: invalid volume contents ({exc})", offset) from None


# -- tables -----------------------------------------------------------------

def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def write_truth(path, fields) -> None:
    """``fields`` is a sequence of ``(frame_id, ParticleField)``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(TRUTH_COLUMNS)
        for frame_id, pf in fields:
            for p in pf.particles:
                w.writerow([frame_id, fmt(p.x), fmt(p.y), fmt(p.z), fmt(p.diameter), fmt(p.opacity)])


def read_truth(path) -> dict[int, list[Particle]]:
    out: dict[int, list[Particle]] = {}
    for row in _read_rows(path, TRUTH_COLUMNS):
        fid = int(row["frame_id"])
        out.setdefault(fid, []).append(Particle(float(row["x_m"]), float(row["y_m"]), float(row["z_m"]),
                                                float(row["diameter_m"]), float(row["opacity"])))
    return out


def write_detections(path, results) -> None:
    """Detection rows ordered by frame id, then one summary comment per frame."""
    results = sorted(results, key=lambda r: r.frame_id)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(DETECTION_COLUMNS)
        for r in results:
            for d in r.detections:
                w.writerow([r.frame_id, fmt(d.centroid_x), fmt(d.centroid_y), fmt(d.z_estimate),
                            d.pixel_area, fmt(d.equivalent_diameter), fmt(d.peak_intensity)])
        for r in results:
            fh.write(f"# summary frame_id={r.frame_id} count={r.count} "
                     f"concentration_per_uL={fmt(r.concentration)}\n")


def read_detections(path) -> list[FrameResult]:
    frames: dict[int, list[Detection]] = {}
    summary: dict[int, float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    body = [ln for ln in lines if not ln.startswith("#")]
    for ln in lines:
        if ln.startswith("# summary"):
            kv = dict(item.split("=", 1) for item in ln[len("# summary"):].split())
            summary[int(kv["frame_id"])] = float(kv["concentration_per_uL"])
            frames.setdefault(int(kv["frame_id"]), [])
    for row in csv.DictReader(body):
        d = Detection(float(row["centroid_x_m"]), float(row["centroid_y_m"]),
                      float(row["z_m"]) if row["z_m"] else float("nan"), int(row["pixel_area"]),
                      float(row["eq_diameter_m"]), float(row["peak_intensity"]))
        frames.setdefault(int(row["frame_id"]), []).append(d)
    return [FrameResult(tuple(frames[k]), summary.get(k, float("nan")), frame_id=k) for k in sorted(frames)]


def write_samples(path, samples) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(SAMPLE_COLUMNS)
        for s in samples:
            w.writerow([fmt(s.x), fmt(s.y), fmt(s.depth), fmt(s.time), fmt(s.concentration)])


def read_samples(path) -> list[SampleRecord]:
    out = []
    for i, row in enumerate(_read_rows(path, SAMPLE_COLUMNS), start=2):
        try:
            out.append(SampleRecord(float(row["x_m"]), float(row["y_m"]), float(row["depth_m"]),
                                    float(row["time_s"]), float(row["conc_per_uL"])))
        except (TypeError, ValueError) as exc:
            raise InputError(f"{path}: line {i}: {exc}") from None
    return out


def _read_rows(path, columns):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(ln for ln in fh if not ln.startswith("#"))
        missing = [c for c in columns if c not in (reader.fieldnames or [])]
        if missing:
            raise InputError(f"{path}: missing column(s) {', '.join(missing)}")
        return list(reader)


def write_grid(csv_path, json_path, grid: ConcentrationGrid, extra: dict | None = None) -> None:
    """Grid values row by row (first row at the smallest y); invalid cells blank."""
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        for row in grid.values:
            w.writerow([fmt(v) for v in row])
    side = grid.sidecar()
    side.update(extra or {})
    Path(json_path).write_text(json.dumps(side, sort_keys=True) + "\n", encoding="utf-8")


def read_grid(csv_path, json_path) -> ConcentrationGrid:
    side = json.loads(Path(json_path).read_text(encoding="utf-8"))
    with open(csv_path, newline="", encoding="utf-8") as fh:
        rows = [[float(v) if v else np.nan for v in r] for r in csv.reader(fh)]
    return ConcentrationGrid(tuple(side["origin"]), float(side["cell_size"]), int(side["nx"]),
                             int(side["ny"]), np.array(rows), np.array(side["mask"], dtype=bool))


def write_profile(path, profile: DepthProfile) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(PROFILE_COLUMNS)
        e = profile.bin_edges
        for k in range(profile.n_bins):
            w.writerow([fmt(float(e[k])), fmt(float(e[k + 1])), int(profile.count[k]),
                        fmt(profile.mean[k]), fmt(profile.std[k]), fmt(profile.normalized[k])])
