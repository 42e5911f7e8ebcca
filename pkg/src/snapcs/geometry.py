"""Capture geometry and the array conventions used everywhere else.

Conventions
-----------
* A video volume is a ``(t, H, W)`` float64 array with values in [0, 1];
  axis 0 is time, axis 1 is the row (y), axis 2 is the column (x).
* A patch (decoder block) is a ``(t, h_p, w_p)`` view of a volume taken at
  a spatial offset aligned to the building-block stride.
* Flattening a patch is a C-order ravel of ``(t, h_p, w_p)``: x varies
  fastest, then y, then time.  All decoder weight matrices and file
  payloads rely on this order.
* Sample matrices store one sample per column: ``X`` is ``(n_voxels, n)``
  and ``Y`` is ``(n_measurements, n)``.
* Patch grids are enumerated row-major: y outer, x inner.
"""

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError


@dataclass(frozen=True)
class Geometry:
    """Sizes tying the mask, the encoder and the decoders together.

    ``block_w`` / ``block_h`` give the spatial footprint of the mask
    building block, which doubles as the patch stride.  ``patch_w`` /
    ``patch_h`` give the decoder patch footprint and must be multiples of
    the block footprint.  ``temporal_len`` is the number of frames merged
    into one coded exposure.  Frame sizes must be multiples of the block
    footprint so the tiling is exact.
    """

    frame_width: int
    frame_height: int
    temporal_len: int
    patch_w: int = 8
    patch_h: int = 8
    block_w: int = 4
    block_h: int = 4

    def __post_init__(self):
        for name in ("frame_width", "frame_height", "temporal_len",
                     "patch_w", "patch_h", "block_w", "block_h"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise GeometryError(f"{name} must be a positive integer, got {value!r}")
        if self.patch_w % self.block_w or self.patch_h % self.block_h:
            raise GeometryError(
                f"patch size {self.patch_w}x{self.patch_h} is not a multiple of "
                f"the block size {self.block_w}x{self.block_h}")
        if self.frame_width % self.block_w or self.frame_height % self.block_h:
            raise GeometryError(
                f"frame size {self.frame_width}x{self.frame_height} is not a multiple "
                f"of the block size {self.block_w}x{self.block_h}")
        if self.patch_w > self.frame_width or self.patch_h > self.frame_height:
            raise GeometryError("patch does not fit inside the frame")

    # Patch stride equals the building-block footprint: shifting a patch by
    # one block leaves it covered by the same tiled mask pattern, so a single
    # decoder applies at every grid offset.
    @property
    def stride_x(self):
        return self.block_w

    @property
    def stride_y(self):
        return self.block_h

    @property
    def n_voxels(self):
        """Length of a flattened patch (decoder input dimension x)."""
        return self.patch_w * self.patch_h * self.temporal_len

    @property
    def n_measurements(self):
        """Pixels per patch (decoder measurement dimension y)."""
        return self.patch_w * self.patch_h

    @property
    def patches_x(self):
        return (self.frame_width - self.patch_w) // self.stride_x + 1

    @property
    def patches_y(self):
        return (self.frame_height - self.patch_h) // self.stride_y + 1

    @property
    def patch_count(self):
        return self.patches_x * self.patches_y

    @property
    def compression_ratio(self):
        return self.n_measurements / self.n_voxels

    def with_frame(self, frame_width, frame_height):
        """Same patch/block sizes on a different frame."""
        return Geometry(frame_width, frame_height, self.temporal_len,
                        self.patch_w, self.patch_h, self.block_w, self.block_h)


@dataclass(frozen=True, eq=False)
class VideoVolume:
    """One capture group of frames, plus optional pre-padding size.

    ``crop_size`` is the original ``(width, height)`` before any padding
    was applied at ingest; exporters crop back to it.
    """

    pixels: np.ndarray
    geometry: Geometry
    crop_size: tuple = None

    def __post_init__(self):
        g = self.geometry
        expected = (g.temporal_len, g.frame_height, g.frame_width)
        if self.pixels.shape != expected:
            raise GeometryError(
                f"volume shape {self.pixels.shape} does not match geometry {expected}")
        if self.pixels.dtype != np.float64:
            raise GeometryError(f"volume dtype must be float64, got {self.pixels.dtype}")


@dataclass(frozen=True, eq=False)
class Patch:
    """A ``(t, h_p, w_p)`` pixel block and the offset it was cut from.

    ``offset`` is ``(frame, y, x)`` in volume coordinates.
    """

    pixels: np.ndarray
    offset: tuple = (0, 0, 0)


@dataclass(frozen=True, eq=False)
class CodedFrame:
    """A single coded exposure: per-pixel sums of masked frames.

    ``values`` is ``(H, W)`` float64 and non-negative; with t frames in
    [0, 1] each entry is at most the per-pixel count of open mask cells.
    """

    values: np.ndarray
    temporal_len: int
    mask_sha256: str = None

    def __post_init__(self):
        if self.values.ndim != 2:
            raise GeometryError(f"coded frame must be 2-D, got shape {self.values.shape}")


def flatten_patch(patch):
    """Patch -> 1-D float64 vector, C-order (x fastest, then y, then t)."""
    pixels = patch.pixels if isinstance(patch, Patch) else patch
    return np.ascontiguousarray(pixels, dtype=np.float64).ravel()


def unflatten_patch(vec, temporal_len, patch_h, patch_w, offset=(0, 0, 0)):
    """Inverse of :func:`flatten_patch` for the given patch dimensions."""
    vec = np.asarray(vec, dtype=np.float64)
    expected = temporal_len * patch_h * patch_w
    if vec.shape != (expected,):
        raise GeometryError(f"expected a flat vector of length {expected}, got shape {vec.shape}")
    return Patch(vec.reshape(temporal_len, patch_h, patch_w), tuple(offset))


def patch_offsets(geometry):
    """All (y, x) patch origins in grid order (y outer, x inner)."""
    ys = range(0, geometry.frame_height - geometry.patch_h + 1, geometry.stride_y)
    xs = range(0, geometry.frame_width - geometry.patch_w + 1, geometry.stride_x)
    return [(y, x) for y in ys for x in xs]


def extract_patches(volume, geometry=None):
    """Cut every stride-aligned patch out of a volume, in grid order."""
    g = geometry if geometry is not None else volume.geometry
    if volume.geometry != g:
        raise GeometryError("volume geometry does not match the requested geometry")
    pix = volume.pixels
    return [Patch(pix[:, y:y + g.patch_h, x:x + g.patch_w].copy(), (0, y, x))
            for y, x in patch_offsets(g)]
