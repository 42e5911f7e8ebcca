"""Training-set construction: random space-time blocks paired with their
measurements, plus a self-describing binary file format.

Blocks are sampled per video with quotas proportional to video length,
from spatial offsets aligned to the mask stride (so the single per-patch
measurement matrix applies) and unconstrained temporal offsets.  Pixel
data is stored as the original uint8 values; with noiseless measurements
the measurement matrix product is bit-reproducible, so only noisy
measurements are stored and clean ones are regenerated on load.
"""

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import kernels
from .encoder import NoiseSpec, add_noise_columns
from .errors import FormatError
from .linear import MomentAccumulator, solve, with_mask
from .mask import mask_from_bytes
from .mlp import MlpModel, train

DATASET_MAGIC = b"SCSD"
DATASET_VERSION = 1
_HEADER = struct.Struct("<4sHIIQ32s")
_NOISE = struct.Struct("<BddQ")
_NOISE_KINDS = {"none": 0, "gaussian-snr": 1}
_NOISE_NAMES = {v: k for k, v in _NOISE_KINDS.items()}

# Measurements are produced and regenerated with this GEMM column chunk so
# saved and reloaded clean datasets agree bit for bit.
GEMM_CHUNK = 8192


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """Sample columns: blocks (n_voxels, N) uint8, measurements
    (n_measurements, N) float64 when clean, float32 when noisy."""

    blocks: np.ndarray
    measurements: np.ndarray
    mask: object                # MeasurementMask the measurements used
    noise: NoiseSpec
    manifest: dict              # provenance: videos, quotas, patch layout

    @property
    def sample_count(self):
        return self.blocks.shape[1]

    @property
    def n_voxels(self):
        return self.blocks.shape[0]

    @property
    def n_measurements(self):
        return self.measurements.shape[0]

    @property
    def patch_shape(self):
        m = self.manifest
        return (m["temporal_len"], m["patch_h"], m["patch_w"])


def _quotas(count, durations):
    """Largest-remainder split of ``count`` proportional to durations."""
    durations = np.asarray(durations, dtype=np.float64)
    total = durations.sum()
    exact = count * durations / total
    base = np.floor(exact).astype(np.int64)
    short = count - int(base.sum())
    if short:
        order = np.argsort(-(exact - base), kind="stable")
        base[order[:short]] += 1
    return base.tolist()


def scaled_blocks(blocks, columns=None):
    """uint8 block columns -> float64 in [0, 1]."""
    picked = blocks if columns is None else blocks[:, columns]
    return picked / 255.0


def measure_blocks(patch_matrix, blocks):
    """Measurements of uint8 block columns, chunked for reproducibility."""
    n = blocks.shape[1]
    out = np.empty((patch_matrix.shape[0], n), dtype=np.float64)
    for start in range(0, n, GEMM_CHUNK):
        chunk = slice(start, min(start + GEMM_CHUNK, n))
        out[:, chunk] = patch_matrix @ (blocks[:, chunk] / 255.0)
    return out


def build_training_set(videos, mask, count, patch_w=8, patch_h=8, seed=0,
                       noise=NoiseSpec()):
    """Sample ``count`` blocks from uint8 videos and measure them.

    videos : list of (video_id, frames) with frames (F, H, W) uint8;
             frame sizes may differ between videos but must be multiples
             of the mask block footprint, with F >= temporal_len.
    mask   : MeasurementMask shared by all samples
    noise  : NoiseSpec applied to the measurement columns

    Per-video quotas are proportional to frame counts.  Spatial offsets
    are stride-aligned and blocks are sampled without replacement unless
    a quota exceeds the number of distinct positions, which is recorded
    in the manifest.  Offsets enumerate frame-major, then y, then x.
    """
    if not videos:
        raise ValueError("no source videos")
    if count < 1:
        raise ValueError("count must be positive")
    block = mask.block
    t, step_y, step_x = block.temporal_len, block.block_h, block.block_w
    n_voxels = patch_w * patch_h * t
    quotas = _quotas(count, [frames.shape[0] for _, frames in videos])
    seeds = np.random.SeedSequence(seed).spawn(len(videos))

    parts = []
    entries = []
    for (video_id, frames), quota, sub_seed in zip(videos, quotas, seeds):
        f_total, height, width = frames.shape
        if frames.dtype != np.uint8:
            raise ValueError(f"video {video_id!r} is not uint8")
        if height % step_y or width % step_x:
            raise ValueError(f"video {video_id!r} size is not a multiple of the mask block")
        nf = f_total - t + 1
        ny = (height - patch_h) // step_y + 1
        nx = (width - patch_w) // step_x + 1
        if nf < 1 or ny < 1 or nx < 1:
            raise ValueError(f"video {video_id!r} is too small for a single block")
        capacity = nf * ny * nx
        with_replacement = quota > capacity
        entry = {"id": str(video_id), "frames": int(f_total), "height": int(height),
                 "width": int(width), "quota": int(quota),
                 "with_replacement": with_replacement}
        entries.append(entry)
        if quota == 0:
            continue
        rng = np.random.default_rng(sub_seed)
        if with_replacement:
            picks = rng.integers(0, capacity, size=quota)
        else:
            picks = rng.permutation(capacity)[:quota]
        f_idx, rest = np.divmod(picks, ny * nx)
        y_idx, x_idx = np.divmod(rest, nx)
        parts.append(kernels.gather_blocks(
            np.ascontiguousarray(frames), f_idx, y_idx * step_y, x_idx * step_x,
            t, patch_h, patch_w))

    blocks = np.concatenate(parts, axis=1) if len(parts) > 1 else parts[0]
    if blocks.shape != (n_voxels, count):
        raise AssertionError("sampled block matrix has unexpected shape")

    measurements = measure_blocks(mask.patch_matrix(patch_h, patch_w), blocks)
    if noise.kind != "none":
        noisy, _, _ = add_noise_columns(measurements, noise)
        measurements = noisy.astype(np.float32)

    manifest = {
        "temporal_len": t,
        "patch_w": int(patch_w),
        "patch_h": int(patch_h),
        "block_w": step_x,
        "block_h": step_y,
        "count": int(count),
        "seed": int(seed),
        "offset_layout": "frame-major",
        "videos": entries,
    }
    return TrainingSet(blocks, measurements, mask, noise, manifest)


def save_training_set(path, ts):
    digest = ts.mask.sha256
    noisy = ts.noise.kind != "none"
    header = _HEADER.pack(DATASET_MAGIC, DATASET_VERSION, ts.n_voxels,
                          ts.n_measurements, ts.sample_count, digest)
    lo, hi = ts.noise.snr_db
    noise_rec = _NOISE.pack(_NOISE_KINDS[ts.noise.kind], lo, hi,
                            ts.noise.seed & 0xFFFFFFFFFFFFFFFF)
    mask_rec = ts.mask.to_bytes()
    manifest_rec = json.dumps(ts.manifest, sort_keys=True,
                              separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(noise_rec)
        fh.write(struct.pack("<I", len(mask_rec)))
        fh.write(mask_rec)
        fh.write(struct.pack("<I", len(manifest_rec)))
        fh.write(manifest_rec)
        fh.write(np.ascontiguousarray(ts.blocks).tobytes())
        if noisy:
            fh.write(np.ascontiguousarray(ts.measurements, dtype="<f4").tobytes())


def load_training_set(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size + _NOISE.size:
        raise FormatError("dataset file is truncated")
    magic, version, n_voxels, n_meas, count, digest = _HEADER.unpack_from(data)
    if magic != DATASET_MAGIC:
        raise FormatError(f"bad dataset magic {magic!r}")
    if version != DATASET_VERSION:
        raise FormatError(f"unsupported dataset version {version}")
    offset = _HEADER.size
    kind_code, lo, hi, noise_seed = _NOISE.unpack_from(data, offset)
    offset += _NOISE.size
    if kind_code not in _NOISE_NAMES:
        raise FormatError(f"unknown noise kind code {kind_code}")
    noise = NoiseSpec(_NOISE_NAMES[kind_code], (lo, hi), noise_seed)

    def take_record():
        nonlocal offset
        if offset + 4 > len(data):
            raise FormatError("dataset file is truncated")
        (length,) = struct.unpack_from("<I", data, offset)
        record = data[offset + 4:offset + 4 + length]
        if len(record) != length:
            raise FormatError("dataset file is truncated")
        offset += 4 + length
        return record

    mask = mask_from_bytes(take_record())
    if mask.sha256 != digest:
        raise FormatError("embedded mask does not match the dataset's mask digest")
    manifest = json.loads(take_record().decode())
    patch_w, patch_h = manifest["patch_w"], manifest["patch_h"]
    if patch_w * patch_h * mask.temporal_len != n_voxels:
        raise FormatError("manifest patch layout does not match the block length")

    x_bytes = n_voxels * count
    body = data[offset:offset + x_bytes]
    if len(body) != x_bytes:
        raise FormatError("dataset block payload is truncated")
    blocks = np.frombuffer(body, dtype=np.uint8).reshape(n_voxels, count).copy()
    offset += x_bytes

    if noise.kind == "none":
        if offset != len(data):
            raise FormatError("unexpected trailing bytes in a clean dataset")
        measurements = measure_blocks(mask.patch_matrix(patch_h, patch_w), blocks)
    else:
        y_bytes = n_meas * count * 4
        body = data[offset:offset + y_bytes]
        if len(body) != y_bytes:
            raise FormatError("dataset measurement payload is truncated")
        measurements = np.frombuffer(body, dtype="<f4").reshape(n_meas, count).copy()
        if offset + y_bytes != len(data):
            raise FormatError("unexpected trailing bytes after measurements")
    return TrainingSet(blocks, measurements, mask, noise, manifest)


def fit_linear(ts, ridge=0.0, allow_pseudo_inverse=False):
    """Closed-form decoder from a TrainingSet, moments chunked in float64."""
    acc = MomentAccumulator(ts.n_voxels, ts.n_measurements)
    for start in range(0, ts.sample_count, GEMM_CHUNK):
        cols = slice(start, min(start + GEMM_CHUNK, ts.sample_count))
        acc.accumulate(scaled_blocks(ts.blocks, cols), ts.measurements[:, cols])
    model = solve(acc, ridge=ridge, allow_pseudo_inverse=allow_pseudo_inverse)
    return with_mask(model, ts.mask.sha256)


def fit_mlp(ts, config):
    """SGD-trained decoder from a TrainingSet; returns (MlpModel, TrainResult)."""
    result = train(ts.blocks, ts.measurements, config)
    return MlpModel(result.params, result.stats, ts.mask.sha256), result
