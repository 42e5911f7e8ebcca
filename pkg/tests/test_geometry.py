import numpy as np
import numpy.testing as npt
import pytest

from snapcs.errors import GeometryError
from snapcs.geometry import (Geometry, Patch, VideoVolume, extract_patches,
                             flatten_patch, patch_offsets, unflatten_patch)
from conftest import random_volume


def test_derived_dimensions_at_default_layout():
    g = Geometry(256, 256, 16)
    assert g.n_voxels == 1024
    assert g.n_measurements == 64
    assert g.stride_x == 4 and g.stride_y == 4
    assert g.patches_x == 63 and g.patches_y == 63
    assert g.patch_count == 3969
    assert g.compression_ratio == 1 / 16


def test_patch_grid_counts_small_frames():
    assert Geometry(8, 8, 16).patch_count == 1
    assert Geometry(12, 8, 16).patches_x == 2
    assert Geometry(16, 12, 16).patch_count == 3 * 2


@pytest.mark.parametrize("kwargs", [
    dict(frame_width=10, frame_height=8, temporal_len=16),   # width not multiple of 4
    dict(frame_width=8, frame_height=8, temporal_len=16, patch_w=6),  # patch not multiple
    dict(frame_width=4, frame_height=4, temporal_len=16),    # patch exceeds frame
    dict(frame_width=8, frame_height=8, temporal_len=0),
    dict(frame_width=8, frame_height=8, temporal_len=16, block_w=-4),
])
def test_invalid_geometry_rejected(kwargs):
    with pytest.raises(GeometryError):
        Geometry(**kwargs)


def test_flatten_order_is_x_then_y_then_time():
    t, h, w = 3, 2, 4
    pixels = np.empty((t, h, w))
    for k in range(t):
        for y in range(h):
            for x in range(w):
                pixels[k, y, x] = 100 * k + 10 * y + x
    vec = flatten_patch(Patch(pixels))
    for k in range(t):
        for y in range(h):
            for x in range(w):
                assert vec[k * h * w + y * w + x] == 100 * k + 10 * y + x


def test_flatten_unflatten_round_trip():
    rng = np.random.default_rng(7)
    for _ in range(200):
        pixels = rng.random((16, 8, 8))
        patch = Patch(pixels, (0, 4, 8))
        back = unflatten_patch(flatten_patch(patch), 16, 8, 8, patch.offset)
        npt.assert_array_equal(back.pixels, pixels)
        assert back.offset == (0, 4, 8)


def test_unflatten_rejects_wrong_length():
    with pytest.raises(GeometryError):
        unflatten_patch(np.zeros(100), 16, 8, 8)


def test_patch_offsets_grid_order():
    g = Geometry(16, 12, 16)
    offsets = patch_offsets(g)
    assert offsets == [(0, 0), (0, 4), (0, 8), (4, 0), (4, 4), (4, 8)]


def test_extract_patches_matches_manual_slices(default_geometry):
    volume = random_volume(default_geometry, seed=3)
    patches = extract_patches(volume)
    assert len(patches) == default_geometry.patch_count
    for patch, (y, x) in zip(patches, patch_offsets(default_geometry)):
        assert patch.offset == (0, y, x)
        npt.assert_array_equal(patch.pixels, volume.pixels[:, y:y + 8, x:x + 8])


def test_volume_validation(default_geometry):
    good = np.zeros((16, 24, 32))
    VideoVolume(good, default_geometry)
    with pytest.raises(GeometryError):
        VideoVolume(good[:, :, :16], default_geometry)
    with pytest.raises(GeometryError):
        VideoVolume(good.astype(np.float32), default_geometry)
