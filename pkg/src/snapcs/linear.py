"""Closed-form linear decoder.

The decoder is the matrix W minimizing sum_i ||W y_i - x_i||^2 over
training pairs, i.e. W = (sum x_i y_i^T)(sum y_i y_i^T)^(-1).  Both
moments are accumulated in float64 over sample batches, so the solve
never needs the training set in memory and shards can be merged.
"""

import struct
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigh

from .errors import FormatError, UnsolvableMaskError
from .geometry import unflatten_patch

LINEAR_MAGIC = b"SCSL"
LINEAR_VERSION = 1
_HEADER = struct.Struct("<4sHII32sQd")

CONDITION_WARN_THRESHOLD = 1e12


class IllConditionedWarning(UserWarning):
    """Normal equations are close to singular; the solve may be noisy."""


class MomentAccumulator:
    """Streaming second moments of (block, measurement) pairs.

    Accumulates cross = sum x_i y_i^T (n_voxels, n_measurements) and
    gram = sum y_i y_i^T (n_measurements, n_measurements) in float64.
    """

    def __init__(self, n_voxels, n_measurements):
        self.n_voxels = int(n_voxels)
        self.n_measurements = int(n_measurements)
        self.cross = np.zeros((self.n_voxels, self.n_measurements), dtype=np.float64)
        self.gram = np.zeros((self.n_measurements, self.n_measurements), dtype=np.float64)
        self.count = 0

    def accumulate(self, blocks, measurements):
        """Add a batch: blocks (n_voxels, n), measurements (n_measurements, n)."""
        x = np.asarray(blocks, dtype=np.float64)
        y = np.asarray(measurements, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        if y.ndim == 1:
            y = y[:, None]
        if x.shape[0] != self.n_voxels or y.shape[0] != self.n_measurements:
            raise ValueError(
                f"batch shapes {x.shape}/{y.shape} do not match accumulator "
                f"({self.n_voxels}/{self.n_measurements})")
        if x.shape[1] != y.shape[1]:
            raise ValueError("blocks and measurements hold different sample counts")
        self.cross += x @ y.T
        self.gram += y @ y.T
        self.count += x.shape[1]
        return self

    def merge(self, other):
        """Fold in moments accumulated elsewhere (e.g. another shard)."""
        if (other.n_voxels, other.n_measurements) != (self.n_voxels, self.n_measurements):
            raise ValueError("cannot merge accumulators of different dimensions")
        self.cross += other.cross
        self.gram += other.gram
        self.count += other.count
        return self


@dataclass(frozen=True, eq=False)
class LinearModel:
    """Trained linear decoder: block_estimate = weights @ measurement."""

    weights: np.ndarray       # (n_voxels, n_measurements) float64
    mask_sha256: bytes = None  # raw digest of the mask trained against
    sample_count: int = 0
    ridge: float = 0.0

    @property
    def n_voxels(self):
        return self.weights.shape[0]

    @property
    def n_measurements(self):
        return self.weights.shape[1]

    def decode_measurements(self, measurements, clamp=True):
        """Decode (n_measurements, n) columns to (n_voxels, n) blocks."""
        y = np.asarray(measurements, dtype=np.float64)
        out = self.weights @ y
        if clamp:
            np.clip(out, 0.0, 1.0, out=out)
        return out

    def decode_patch(self, measurement, geometry, offset=(0, 0, 0), clamp=True):
        """Decode a single measurement vector to a Patch."""
        y = np.asarray(measurement, dtype=np.float64)
        if y.shape != (self.n_measurements,):
            raise ValueError(f"expected a ({self.n_measurements},) measurement, got {y.shape}")
        x = self.decode_measurements(y[:, None], clamp=clamp)[:, 0]
        return unflatten_patch(x, geometry.temporal_len, geometry.patch_h,
                               geometry.patch_w, offset)


def solve(acc, ridge=0.0, allow_pseudo_inverse=False):
    """Solve the normal equations of an accumulator into a LinearModel.

    ridge adds lambda*I to the gram matrix before factoring.  A singular
    system raises UnsolvableMaskError naming the measurement rows with
    zero energy (the signature of mask pixels that are never exposed)
    unless ``allow_pseudo_inverse`` asks for the minimum-norm solution.
    """
    if acc.count == 0:
        raise ValueError("accumulator holds no samples")
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    gram = acc.gram + ridge * np.eye(acc.n_measurements)

    dead = np.flatnonzero(np.diag(gram) == 0.0)
    if dead.size and not allow_pseudo_inverse:
        raise UnsolvableMaskError(
            "measurement moments are singular: measurement rows "
            f"{dead.tolist()} have zero energy, so those patch pixels are never "
            "exposed by the mask; fix the mask, add ridge, or allow the "
            "pseudo-inverse explicitly", dead_rows=dead.tolist())

    evals = eigh(gram, eigvals_only=True)
    if evals[0] <= 0 or evals[-1] / evals[0] > CONDITION_WARN_THRESHOLD:
        cond = np.inf if evals[0] <= 0 else evals[-1] / evals[0]
        warnings.warn(
            f"normal equations are ill-conditioned (condition number {cond:.3g})",
            IllConditionedWarning, stacklevel=2)

    if allow_pseudo_inverse:
        weights = acc.cross @ np.linalg.pinv(gram)
    else:
        try:
            factor = cho_factor(gram, lower=True)
        except np.linalg.LinAlgError as exc:
            raise UnsolvableMaskError(
                f"measurement moments are singular ({exc}); fix the mask, add "
                "ridge, or allow the pseudo-inverse explicitly") from exc
        weights = cho_solve(factor, acc.cross.T).T
    return LinearModel(np.ascontiguousarray(weights), None, acc.count, float(ridge))


def with_mask(model, mask_sha256):
    """Attach a mask digest to a solved model."""
    return LinearModel(model.weights, mask_sha256, model.sample_count, model.ridge)


def save_linear_model(path, model):
    digest = model.mask_sha256 if model.mask_sha256 is not None else bytes(32)
    if len(digest) != 32:
        raise ValueError("mask digest must be 32 raw bytes")
    header = _HEADER.pack(LINEAR_MAGIC, LINEAR_VERSION, model.n_voxels,
                          model.n_measurements, digest, model.sample_count,
                          model.ridge)
    body = np.ascontiguousarray(model.weights, dtype=np.float64).tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(body)


def load_linear_model(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise FormatError("linear model file is truncated")
    magic, version, n_voxels, n_meas, digest, count, ridge = _HEADER.unpack_from(data)
    if magic != LINEAR_MAGIC:
        raise FormatError(f"bad linear model magic {magic!r}")
    if version != LINEAR_VERSION:
        raise FormatError(f"unsupported linear model version {version}")
    body = data[_HEADER.size:]
    expected = n_voxels * n_meas * 8
    if len(body) != expected:
        raise FormatError(f"linear model payload is {len(body)} bytes, expected {expected}")
    weights = np.frombuffer(body, dtype="<f8").reshape(n_voxels, n_meas).copy()
    mask_digest = None if digest == bytes(32) else digest
    return LinearModel(weights, mask_digest, count, ridge)
