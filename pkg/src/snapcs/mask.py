"""Binary measurement masks built from a small tiled space-time block.

A mask is defined entirely by one ``(t, block_h, block_w)`` binary
building block; tiling it over the frame gives the per-frame exposure
patterns, and the same periodicity makes a single per-patch measurement
matrix valid at every stride-aligned patch position.
"""

import hashlib
import io
import struct
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import FormatError, GeometryError

MASK_MAGIC = b"SCSM"
MASK_VERSION = 1
_HEADER = struct.Struct("<4sHHHHIIQ")


def _as_fraction(density):
    """Accept Fraction, int, str, or float in (0, 1]; decimal-looking
    floats are read via their repr so 0.1 means 1/10, not its binary
    approximation."""
    if isinstance(density, Fraction):
        frac = density
    elif isinstance(density, str):
        frac = Fraction(density)
    elif isinstance(density, (int, np.integer)):
        frac = Fraction(int(density))
    elif isinstance(density, float):
        frac = Fraction(repr(density))
    else:
        raise TypeError(f"unsupported density type: {type(density).__name__}")
    if not 0 < frac <= 1:
        raise ValueError(f"density must lie in (0, 1], got {frac}")
    return frac


@dataclass(frozen=True, eq=False)
class BuildingBlock:
    """The repeating unit of a measurement mask.

    cells   : (temporal_len, block_h, block_w) uint8 array in {0, 1}
    density : target fraction of open cells, kept exact as a Fraction
    seed    : RNG seed the cells were drawn with
    exact_count : True when the open-cell count was forced to
                  round(density * cells.size) rather than drawn i.i.d.
    """

    cells: np.ndarray
    density: Fraction
    seed: int
    exact_count: bool = True

    def __post_init__(self):
        if self.cells.ndim != 3:
            raise GeometryError(f"building block must be 3-D, got shape {self.cells.shape}")
        if self.cells.dtype != np.uint8:
            raise GeometryError("building block cells must be uint8")
        if not np.isin(self.cells, (0, 1)).all():
            raise ValueError("building block cells must be 0 or 1")
        self.cells.setflags(write=False)

    @property
    def temporal_len(self):
        return self.cells.shape[0]

    @property
    def block_h(self):
        return self.cells.shape[1]

    @property
    def block_w(self):
        return self.cells.shape[2]


def generate_building_block(block_w, block_h, temporal_len, density, seed, exact_count=True):
    """Draw a random binary building block.

    With ``exact_count`` the block holds exactly round(density * size)
    open cells at uniformly random positions; otherwise cells are i.i.d.
    Bernoulli(density).  A density too small to open a single cell is an
    error.
    """
    frac = _as_fraction(density)
    size = block_w * block_h * temporal_len
    rng = np.random.default_rng(seed)
    if exact_count:
        n_open = round(frac * size)
        if n_open < 1:
            raise ValueError(
                f"density {frac} opens no cells in a {block_w}x{block_h}x{temporal_len} block")
        flat = np.zeros(size, dtype=np.uint8)
        flat[:n_open] = 1
        rng.shuffle(flat)
        cells = flat.reshape(temporal_len, block_h, block_w)
    else:
        cells = (rng.random(size) < float(frac)).astype(np.uint8)
        cells = cells.reshape(temporal_len, block_h, block_w)
    return BuildingBlock(cells, frac, int(seed), exact_count)


@dataclass(frozen=True, eq=False)
class MeasurementMask:
    """A building block plus the derived views the rest of the pipeline
    needs (tiled exposure patterns, per-patch matrix, content hash)."""

    block: BuildingBlock
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def temporal_len(self):
        return self.block.temporal_len

    def tile(self, frame_height, frame_width):
        """Tile the block over an (H, W) frame: (t, H, W) uint8."""
        b = self.block
        if frame_height % b.block_h or frame_width % b.block_w:
            raise GeometryError(
                f"frame size {frame_width}x{frame_height} is not a multiple of the "
                f"block size {b.block_w}x{b.block_h}")
        return np.tile(b.cells, (1, frame_height // b.block_h, frame_width // b.block_w))

    def patch_matrix(self, patch_h, patch_w):
        """Measurement matrix of one patch: (patch_h*patch_w, t*patch_h*patch_w).

        Row r (pixel r of the flattened patch) has nonzeros only at
        columns k * n_pixels + r, holding the mask cell of that pixel in
        frame k; each coded pixel is the masked sum over time of the
        voxels directly behind it.
        """
        key = ("pm", patch_h, patch_w)
        if key not in self._cache:
            patch_cells = self.tile(patch_h, patch_w)
            n_pix = patch_h * patch_w
            t = self.temporal_len
            matrix = np.zeros((n_pix, n_pix * t), dtype=np.float64)
            flat = patch_cells.reshape(t, n_pix)
            rows = np.arange(n_pix)
            for k in range(t):
                matrix[rows, k * n_pix + rows] = flat[k]
            matrix.setflags(write=False)
            self._cache[key] = matrix
        return self._cache[key]

    def to_bytes(self):
        b = self.block
        frac = b.density
        header = _HEADER.pack(MASK_MAGIC, MASK_VERSION, b.block_w, b.block_h,
                              b.temporal_len, frac.numerator, frac.denominator,
                              b.seed & 0xFFFFFFFFFFFFFFFF)
        return header + b.cells.tobytes()

    @property
    def sha256(self):
        """Raw 32-byte digest of the serialized mask; derived artifacts
        embed it so mixed mask/model/dataset combinations are caught."""
        if "digest" not in self._cache:
            self._cache["digest"] = hashlib.sha256(self.to_bytes()).digest()
        return self._cache["digest"]

    @property
    def sha256_hex(self):
        return self.sha256.hex()

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())


def mask_from_bytes(data):
    if len(data) < _HEADER.size:
        raise FormatError("mask record is truncated")
    magic, version, block_w, block_h, temporal_len, num, den, seed = \
        _HEADER.unpack_from(data)
    if magic != MASK_MAGIC:
        raise FormatError(f"bad mask magic {magic!r}")
    if version != MASK_VERSION:
        raise FormatError(f"unsupported mask version {version}")
    n_cells = block_w * block_h * temporal_len
    body = data[_HEADER.size:_HEADER.size + n_cells]
    if len(body) != n_cells:
        raise FormatError("mask record is truncated")
    cells = np.frombuffer(body, dtype=np.uint8).reshape(temporal_len, block_h, block_w)
    block = BuildingBlock(cells.copy(), Fraction(num, den), seed)
    return MeasurementMask(block)


def load_mask(path):
    with open(path, "rb") as fh:
        return mask_from_bytes(fh.read())


@dataclass(frozen=True, eq=False)
class SolvabilityReport:
    """Per-pixel open-cell counts of a building block.

    A pixel whose temporal column is all zeros is never measured, which
    makes the linear decoder's normal equations singular.
    """

    exposure_counts: np.ndarray  # (block_h, block_w) int open cells per pixel
    dead_pixels: tuple           # ((y, x), ...) pixels with zero open cells

    @property
    def solvable(self):
        return not self.dead_pixels


def solvability_report(mask_or_block):
    block = mask_or_block.block if isinstance(mask_or_block, MeasurementMask) else mask_or_block
    counts = block.cells.sum(axis=0, dtype=np.int64)
    dead = tuple((int(y), int(x)) for y, x in np.argwhere(counts == 0))
    return SolvabilityReport(counts, dead)
