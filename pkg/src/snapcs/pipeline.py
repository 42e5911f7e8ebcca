"""Frame reconstruction: decode overlapping patches and average them.

Every stride-aligned window of the coded frame is decoded independently
(by whichever decoder is supplied; both expose ``decode_measurements``),
the decoded blocks are scatter-added into a volume, and each voxel is
divided by its coverage count.  With patches twice the stride, interior
pixels are covered exactly four times.
"""

import numpy as np

from . import kernels
from .errors import GeometryError, MaskMismatchError
from .geometry import Geometry, VideoVolume


def _check_model_geometry(model, geometry):
    if model.n_voxels != geometry.n_voxels or model.n_measurements != geometry.n_measurements:
        raise GeometryError(
            f"model dimensions {model.n_voxels}/{model.n_measurements} do not match "
            f"geometry {geometry.n_voxels}/{geometry.n_measurements}")


def _check_mask_match(coded, model):
    model_digest = getattr(model, "mask_sha256", None)
    if coded.mask_sha256 is not None and model_digest is not None:
        if coded.mask_sha256 != model_digest.hex():
            raise MaskMismatchError(
                "coded frame and decoder were built against different masks "
                f"({coded.mask_sha256[:12]}... vs {model_digest.hex()[:12]}...)")


def coverage_weights(geometry):
    """How many patches cover each pixel: (H, W) float64."""
    g = geometry
    ones = np.ones((g.patch_h * g.patch_w, g.patch_count), dtype=np.float64)
    _, hits = kernels.accumulate_windows(
        ones, 1, g.frame_height, g.frame_width,
        g.patch_h, g.patch_w, g.stride_y, g.stride_x)
    return hits


def reconstruct(coded, model, geometry):
    """Decode one coded frame into a VideoVolume.

    coded    : CodedFrame of shape (frame_height, frame_width)
    model    : LinearModel or MlpModel (anything with decode_measurements)
    geometry : Geometry describing the patch grid

    Raises MaskMismatchError when both artifacts carry mask digests and
    they differ.
    """
    g = geometry
    if coded.values.shape != (g.frame_height, g.frame_width):
        raise GeometryError(
            f"coded frame shape {coded.values.shape} does not match geometry "
            f"({g.frame_height}, {g.frame_width})")
    if coded.temporal_len != g.temporal_len:
        raise GeometryError(
            f"coded frame temporal length {coded.temporal_len} != geometry "
            f"{g.temporal_len}")
    _check_model_geometry(model, g)
    _check_mask_match(coded, model)

    values = np.ascontiguousarray(coded.values, dtype=np.float64)
    measurements = kernels.extract_windows(values, g.patch_h, g.patch_w,
                                           g.stride_y, g.stride_x)
    blocks = model.decode_measurements(measurements)
    blocks = np.ascontiguousarray(blocks, dtype=np.float64)
    volume_sum, hits = kernels.accumulate_windows(
        blocks, g.temporal_len, g.frame_height, g.frame_width,
        g.patch_h, g.patch_w, g.stride_y, g.stride_x)
    out = volume_sum / hits[None, :, :]
    np.clip(out, 0.0, 1.0, out=out)
    return VideoVolume(out, g)


def temporal_mean_baseline(coded, mask, geometry):
    """Model-free reference: every frame is the coded frame divided by the
    per-pixel count of open mask cells (pixels never exposed become 0)."""
    g = geometry
    if coded.values.shape != (g.frame_height, g.frame_width):
        raise GeometryError(
            f"coded frame shape {coded.values.shape} does not match geometry "
            f"({g.frame_height}, {g.frame_width})")
    counts = mask.tile(g.frame_height, g.frame_width).sum(axis=0, dtype=np.float64)
    mean = np.divide(coded.values, counts, out=np.zeros_like(coded.values, dtype=np.float64),
                     where=counts > 0)
    np.clip(mean, 0.0, 1.0, out=mean)
    out = np.broadcast_to(mean, (g.temporal_len,) + mean.shape).copy()
    return VideoVolume(out, g)


def encode_sequence(frames, mask, geometry):
    """Split a (F, H, W) float stack into capture groups and encode each.

    F must be a multiple of the geometry's temporal length.  Returns a
    list of CodedFrame.
    """
    from .encoder import encode  # local import to avoid a cycle

    g = geometry
    t = g.temporal_len
    if frames.ndim != 3:
        raise GeometryError(f"frame stack must be 3-D, got shape {frames.shape}")
    if frames.shape[0] % t:
        raise GeometryError(
            f"frame count {frames.shape[0]} is not a multiple of the group length {t}")
    coded = []
    for start in range(0, frames.shape[0], t):
        volume = VideoVolume(np.ascontiguousarray(frames[start:start + t], dtype=np.float64), g)
        coded.append(encode(volume, mask))
    return coded


def reconstruct_sequence(coded_frames, model, geometry):
    """Reconstruct a list of coded frames into one (F, H, W) stack."""
    volumes = [reconstruct(c, model, geometry) for c in coded_frames]
    return np.concatenate([v.pixels for v in volumes], axis=0)
