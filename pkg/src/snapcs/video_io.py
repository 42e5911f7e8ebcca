"""Grayscale video ingest and export.

Two storage layouts are supported: a directory of binary 8-bit PGM files
(one frame each, sorted by name) and a raw uint8 stack described by a
JSON sidecar {"width", "height", "frames", "dtype": "uint8", optional
"channels"}.  Ingest normalizes to [0, 1] float64, BT.601-converts RGB
when asked, reflection-pads the frame to the block grid, and splits the
stack into capture groups of ``temporal_len`` frames, dropping any
trailing remainder.
"""

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, GeometryError
from .geometry import Geometry, VideoVolume

_PGM_HEADER = re.compile(rb"^P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(\d+)\s+(\d+)\s")


def read_pgm(path):
    """Read a binary (P5) 8-bit PGM file into an (H, W) uint8 array."""
    data = Path(path).read_bytes()
    match = _PGM_HEADER.match(data)
    if not match:
        raise FormatError(f"{path}: not a binary PGM file")
    width, height, maxval = (int(g) for g in match.groups())
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit PGM is supported (maxval {maxval})")
    pixels = data[match.end():]
    if len(pixels) < width * height:
        raise FormatError(f"{path}: pixel payload is truncated")
    frame = np.frombuffer(pixels[:width * height], dtype=np.uint8)
    return frame.reshape(height, width).copy()


def write_pgm(path, frame):
    frame = np.asarray(frame)
    if frame.dtype != np.uint8 or frame.ndim != 2:
        raise ValueError("write_pgm expects an (H, W) uint8 array")
    header = f"P5\n{frame.shape[1]} {frame.shape[0]}\n255\n".encode()
    Path(path).write_bytes(header + frame.tobytes())


def read_pgm_sequence(directory):
    """Stack every *.pgm in a directory (sorted by name): (F, H, W) uint8."""
    paths = sorted(Path(directory).glob("*.pgm"))
    if not paths:
        raise FormatError(f"no .pgm files in {directory}")
    frames = [read_pgm(p) for p in paths]
    shapes = {f.shape for f in frames}
    if len(shapes) > 1:
        raise FormatError(f"frames in {directory} have mixed sizes {sorted(shapes)}")
    return np.stack(frames)


def write_pgm_sequence(directory, frames, prefix="frame"):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    digits = max(4, len(str(len(frames) - 1)))
    for i, frame in enumerate(frames):
        write_pgm(directory / f"{prefix}_{i:0{digits}d}.pgm", frame)


def read_raw_video(json_path):
    """Read a raw uint8 stack via its JSON sidecar.

    Returns (F, H, W) or (F, H, W, C) uint8.  The raw file is the sidecar
    path without the '.json' suffix unless the sidecar names a 'raw' file.
    """
    json_path = Path(json_path)
    meta = json.loads(json_path.read_text())
    for key in ("width", "height", "frames"):
        if key not in meta:
            raise FormatError(f"{json_path}: sidecar lacks '{key}'")
    if meta.get("dtype", "uint8") != "uint8":
        raise FormatError(f"{json_path}: only uint8 raw video is supported")
    channels = int(meta.get("channels", 1))
    if channels not in (1, 3):
        raise FormatError(f"{json_path}: unsupported channel count {channels}")
    raw_name = meta.get("raw")
    raw_path = json_path.with_suffix("") if raw_name is None else json_path.parent / raw_name
    data = np.frombuffer(Path(raw_path).read_bytes(), dtype=np.uint8)
    shape = (meta["frames"], meta["height"], meta["width"])
    if channels > 1:
        shape += (channels,)
    expected = int(np.prod(shape))
    if data.size != expected:
        raise FormatError(
            f"{raw_path}: payload holds {data.size} bytes, sidecar implies {expected}")
    return data.reshape(shape).copy()


def write_raw_video(json_path, frames):
    frames = np.asarray(frames)
    if frames.dtype != np.uint8 or frames.ndim not in (3, 4):
        raise ValueError("write_raw_video expects (F, H, W[, C]) uint8")
    json_path = Path(json_path)
    raw_path = json_path.with_suffix("")
    meta = {
        "width": int(frames.shape[2]),
        "height": int(frames.shape[1]),
        "frames": int(frames.shape[0]),
        "dtype": "uint8",
    }
    if frames.ndim == 4:
        meta["channels"] = int(frames.shape[3])
    raw_path.write_bytes(frames.tobytes())
    json_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def bt601_grayscale(frames):
    """BT.601 luma from (..., 3) uint8 RGB, rounded back to uint8."""
    frames = np.asarray(frames)
    if frames.shape[-1] != 3:
        raise ValueError("expected trailing RGB channel axis of size 3")
    luma = (0.299 * frames[..., 0] + 0.587 * frames[..., 1] + 0.114 * frames[..., 2])
    return np.clip(np.rint(luma), 0, 255).astype(np.uint8)


def load_frames(path, to_grayscale=False):
    """Load frames from a PGM directory or a raw-stack JSON sidecar."""
    path = Path(path)
    if path.is_dir():
        return read_pgm_sequence(path)
    frames = read_raw_video(path)
    if frames.ndim == 4:
        if not to_grayscale:
            raise FormatError(
                f"{path} holds RGB frames; pass to_grayscale to convert via BT.601")
        frames = bt601_grayscale(frames)
    return frames


def reflect_pad_frames(frames, block_w, block_h):
    """Reflection-pad the right and bottom edges up to the block grid."""
    f, height, width = frames.shape
    pad_y = (-height) % block_h
    pad_x = (-width) % block_w
    if pad_y == 0 and pad_x == 0:
        return frames
    if height < pad_y + 1 or width < pad_x + 1:
        raise GeometryError("frame too small to reflection-pad onto the block grid")
    return np.pad(frames, ((0, 0), (0, pad_y), (0, pad_x)), mode="reflect")


@dataclass(frozen=True, eq=False)
class IngestResult:
    """Normalized, padded capture groups plus what was trimmed."""

    groups: list            # list of VideoVolume sharing one Geometry
    geometry: Geometry
    original_size: tuple    # (width, height) before padding
    dropped_frames: int     # trailing frames not filling a capture group


def ingest_frames(frames, temporal_len, patch_w=8, patch_h=8, block_w=4, block_h=4):
    """(F, H, W) uint8 -> IngestResult of [0, 1] float64 capture groups."""
    frames = np.asarray(frames)
    if frames.ndim != 3 or frames.dtype != np.uint8:
        raise GeometryError("ingest expects an (F, H, W) uint8 stack")
    n_frames, height, width = frames.shape
    kept = (n_frames // temporal_len) * temporal_len
    if kept == 0:
        raise GeometryError(
            f"stack holds {n_frames} frames, fewer than one {temporal_len}-frame group")
    padded = reflect_pad_frames(frames[:kept], block_w, block_h)
    geometry = Geometry(padded.shape[2], padded.shape[1], temporal_len,
                        patch_w, patch_h, block_w, block_h)
    scaled = padded.astype(np.float64) / 255.0
    groups = [VideoVolume(np.ascontiguousarray(scaled[s:s + temporal_len]),
                          geometry, (width, height))
              for s in range(0, kept, temporal_len)]
    return IngestResult(groups, geometry, (width, height), n_frames - kept)


def ingest_video(path, temporal_len, patch_w=8, patch_h=8, block_w=4, block_h=4,
                 to_grayscale=False):
    """Load a video file/directory and cut it into capture groups."""
    frames = load_frames(path, to_grayscale=to_grayscale)
    return ingest_frames(frames, temporal_len, patch_w, patch_h, block_w, block_h)


def export_frames(volumes, crop_size=None):
    """Concatenate volumes to a uint8 (F, H, W) stack, cropping any padding."""
    stack = np.concatenate([v.pixels for v in volumes], axis=0)
    if crop_size is None and volumes and volumes[0].crop_size is not None:
        crop_size = volumes[0].crop_size
    if crop_size is not None:
        width, height = crop_size
        stack = stack[:, :height, :width]
    return np.clip(np.rint(stack * 255.0), 0, 255).astype(np.uint8)
