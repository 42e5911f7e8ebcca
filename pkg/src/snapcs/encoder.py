"""Coded-exposure capture simulation.

Whole frames go through :func:`encode` (masked temporal sum per pixel);
single patches go through :func:`encode_patch` (measurement-matrix
product).  Both describe the same camera, so on matching inputs they
agree to floating-point reassociation error.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import FormatError, GeometryError, ZeroSignalError
from .geometry import CodedFrame, flatten_patch

CODED_DTYPE = np.float32


def encode(volume, mask):
    """Collapse one capture group into a coded frame.

    volume : VideoVolume whose geometry matches the mask block footprint
    mask   : MeasurementMask

    Each coded pixel is sum_k cells[k, y, x] * volume[k, y, x] with the
    building block tiled over the frame, terms added in frame order.
    """
    g = volume.geometry
    b = mask.block
    if g.temporal_len != b.temporal_len:
        raise GeometryError(
            f"volume temporal length {g.temporal_len} != mask temporal length {b.temporal_len}")
    if g.block_w != b.block_w or g.block_h != b.block_h:
        raise GeometryError(
            f"geometry block {g.block_w}x{g.block_h} != mask block {b.block_w}x{b.block_h}")
    frames = np.ascontiguousarray(volume.pixels, dtype=np.float64)
    values = kernels.encode_frames(frames, np.ascontiguousarray(b.cells))
    return CodedFrame(values, g.temporal_len, mask.sha256_hex)


def encode_patch(patch, patch_matrix):
    """Measure one patch: patch_matrix @ flatten(patch)."""
    x = flatten_patch(patch)
    if patch_matrix.shape[1] != x.shape[0]:
        raise GeometryError(
            f"patch has {x.shape[0]} voxels but the matrix expects {patch_matrix.shape[1]}")
    return patch_matrix @ x


@dataclass(frozen=True)
class NoiseSpec:
    """Measurement noise model.

    kind 'none' leaves measurements exact.  Kind 'gaussian-snr' adds white
    Gaussian noise scaled per measurement vector to a target SNR drawn
    uniformly from ``snr_db`` (inclusive), where SNR is the ratio of the
    mean square of the clean vector to the noise variance.
    """

    kind: str = "none"
    snr_db: tuple = (20.0, 40.0)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "gaussian-snr"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        lo, hi = self.snr_db
        if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
            raise ValueError(f"bad SNR range {self.snr_db!r}")
        object.__setattr__(self, "snr_db", (float(lo), float(hi)))


def add_noise_columns(measurements, spec, rng=None):
    """Add per-column SNR-targeted Gaussian noise to (m, n) measurements.

    Returns (noisy, target_db, empirical_db); the latter two are length-n
    float arrays (empty for kind 'none', where the input is returned
    unchanged).  A zero-power column cannot meet any SNR target and is an
    error.
    """
    if spec.kind == "none":
        return measurements, np.empty(0), np.empty(0)
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    y = np.asarray(measurements, dtype=np.float64)
    squeeze = y.ndim == 1
    if squeeze:
        y = y[:, None]
    power = np.mean(y * y, axis=0)
    if (power == 0).any():
        dead = np.flatnonzero(power == 0)[:8].tolist()
        raise ZeroSignalError(
            f"cannot set an SNR for all-zero measurement vectors (columns {dead})")
    lo, hi = spec.snr_db
    target_db = rng.uniform(lo, hi, size=y.shape[1])
    sigma = np.sqrt(power / 10.0 ** (target_db / 10.0))
    noise = rng.standard_normal(y.shape) * sigma
    noisy = y + noise
    empirical_db = 10.0 * np.log10(power / np.mean(noise * noise, axis=0))
    if squeeze:
        return noisy[:, 0], target_db, empirical_db
    return noisy, target_db, empirical_db


def add_frame_noise(coded, snr_db, seed=0):
    """Return a copy of a coded frame with white Gaussian sensor noise.

    The noise variance is set from the whole frame's mean-square value so
    the frame meets the single ``snr_db`` target, matching how a fixed
    noise floor degrades one exposure.
    """
    spec = NoiseSpec("gaussian-snr", (float(snr_db), float(snr_db)), seed)
    noisy, _, _ = add_noise_columns(coded.values.ravel(), spec)
    return CodedFrame(noisy.reshape(coded.values.shape), coded.temporal_len,
                      coded.mask_sha256)


_CODED_META_KEYS = {"width", "height", "temporal_len", "dtype"}


def write_coded_frame(path, coded):
    """Write a coded frame as raw float32 plus a JSON sidecar.

    ``path`` names the raw file; the sidecar is ``path + '.json'``.
    """
    path = Path(path)
    values = np.ascontiguousarray(coded.values, dtype=CODED_DTYPE)
    path.write_bytes(values.tobytes())
    meta = {
        "width": int(values.shape[1]),
        "height": int(values.shape[0]),
        "temporal_len": int(coded.temporal_len),
        "dtype": "float32",
    }
    if coded.mask_sha256 is not None:
        meta["mask_sha256"] = coded.mask_sha256
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_coded_frame(path):
    path = Path(path)
    try:
        meta = json.loads(Path(str(path) + ".json").read_text())
    except FileNotFoundError:
        raise FormatError(f"coded frame sidecar {path}.json is missing") from None
    missing = _CODED_META_KEYS - meta.keys()
    if missing:
        raise FormatError(f"coded frame sidecar lacks keys {sorted(missing)}")
    if meta["dtype"] != "float32":
        raise FormatError(f"unsupported coded frame dtype {meta['dtype']!r}")
    raw = path.read_bytes()
    expected = meta["height"] * meta["width"] * 4
    if len(raw) != expected:
        raise FormatError(f"coded frame payload is {len(raw)} bytes, expected {expected}")
    values = np.frombuffer(raw, dtype=CODED_DTYPE).reshape(meta["height"], meta["width"])
    return CodedFrame(values.astype(np.float64), meta["temporal_len"],
                      meta.get("mask_sha256"))
