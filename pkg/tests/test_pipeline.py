import numpy as np
import numpy.testing as npt
import pytest

from snapcs.datasets import build_training_set, fit_linear
from snapcs.encoder import encode
from snapcs.errors import GeometryError, MaskMismatchError
from snapcs.geometry import Geometry, VideoVolume, extract_patches, flatten_patch
from snapcs.mask import generate_building_block, MeasurementMask
from snapcs.metrics import psnr, to_8bit
from snapcs.pipeline import (coverage_weights, encode_sequence, reconstruct,
                             reconstruct_sequence, temporal_mean_baseline)

from _synth import synth_video
from conftest import random_volume


def test_coverage_weights_counts():
    g = Geometry(16, 12, 4)
    hits = coverage_weights(g)
    assert hits.shape == (12, 16)
    assert hits[0, 0] == 1          # corner: one patch
    assert hits[0, 6] == 2          # top edge interior: two columns of patches
    assert hits[6, 0] == 2
    assert hits[6, 6] == 4          # interior: 2x2 overlapping patches
    assert hits.max() == 4
    assert hits.min() == 1


class ReplayDecoder:
    """Returns pre-computed true blocks; stands in for a perfect model."""

    def __init__(self, blocks, n_measurements, digest=None):
        self.blocks = blocks
        self.n_voxels = blocks.shape[0]
        self.n_measurements = n_measurements
        self.mask_sha256 = digest

    def decode_measurements(self, measurements):
        assert measurements.shape[1] == self.blocks.shape[1]
        return self.blocks


def test_reconstruct_with_perfect_decoder_round_trips(default_geometry):
    g = default_geometry
    volume = random_volume(g, seed=10)
    block = generate_building_block(g.block_w, g.block_h, g.temporal_len, "1/2", seed=0)
    mask = MeasurementMask(block)
    coded = encode(volume, mask)
    truth = np.stack([flatten_patch(p) for p in extract_patches(volume)], axis=1)
    model = ReplayDecoder(truth, g.n_measurements)
    out = reconstruct(coded, model, g)
    npt.assert_allclose(out.pixels, volume.pixels, atol=1e-12)


def test_reconstruct_rejects_mismatched_mask(default_geometry):
    g = default_geometry
    volume = random_volume(g, seed=11)
    mask = MeasurementMask(generate_building_block(4, 4, g.temporal_len, "1/2", seed=0))
    coded = encode(volume, mask)
    truth = np.zeros((g.n_voxels, g.patch_count))
    model = ReplayDecoder(truth, g.n_measurements, digest=b"\x00" * 32)
    with pytest.raises(MaskMismatchError):
        reconstruct(coded, model, g)
    # matching digests pass
    ok = ReplayDecoder(truth, g.n_measurements, digest=mask.sha256)
    reconstruct(coded, ok, g)
    # absent digest on either side skips the check
    anon = ReplayDecoder(truth, g.n_measurements)
    reconstruct(coded, anon, g)


def test_reconstruct_geometry_checks(default_geometry):
    g = default_geometry
    volume = random_volume(g, seed=12)
    mask = MeasurementMask(generate_building_block(4, 4, g.temporal_len, "1/2", seed=0))
    coded = encode(volume, mask)
    truth = np.zeros((g.n_voxels, g.patch_count))
    with pytest.raises(GeometryError):
        reconstruct(coded, ReplayDecoder(truth, g.n_measurements), g.with_frame(64, 64))
    with pytest.raises(GeometryError):
        reconstruct(coded, ReplayDecoder(truth[: g.n_voxels // 2], g.n_measurements), g)


def test_temporal_mean_baseline_matches_manual():
    g = Geometry(8, 8, 4)
    volume = random_volume(g, seed=13)
    mask = MeasurementMask(generate_building_block(4, 4, 4, "1/2", seed=3))
    coded = encode(volume, mask)
    out = temporal_mean_baseline(coded, mask, g)
    counts = mask.tile(8, 8).sum(axis=0)
    # counts can be zero, so replicate the guarded division
    expected = np.divide(coded.values, counts,
                         out=np.zeros_like(coded.values), where=counts > 0)
    expected = np.clip(expected, 0.0, 1.0)
    for k in range(4):
        npt.assert_allclose(out.pixels[k], expected, atol=1e-15)


def test_temporal_mean_baseline_dead_pixels_are_zero():
    g = Geometry(8, 8, 4)
    block = generate_building_block(4, 4, 4, "1/2", seed=3)
    cells = block.cells.copy()
    cells.setflags(write=True)
    cells[:, 2, 1] = 0  # never exposed
    dead = type(block)(cells, block.density, block.seed, block.exact_count)
    mask = MeasurementMask(dead)
    volume = random_volume(g, seed=14)
    out = temporal_mean_baseline(encode(volume, mask), mask, g)
    assert np.all(out.pixels[:, 2, 1] == 0.0)
    assert np.all(out.pixels[:, 6, 5] == 0.0)  # tiled copy of the dead cell


def test_encode_sequence_splits_groups():
    g = Geometry(8, 8, 4)
    mask = MeasurementMask(generate_building_block(4, 4, 4, "1/2", seed=0))
    rng = np.random.default_rng(15)
    frames = rng.random((8, 8, 8))
    coded = encode_sequence(frames, mask, g)
    assert len(coded) == 2
    first = encode(VideoVolume(frames[:4].copy(), g), mask)
    npt.assert_array_equal(coded[0].values, first.values)
    with pytest.raises(GeometryError):
        encode_sequence(frames[:6], mask, g)
    with pytest.raises(GeometryError):
        encode_sequence(frames[0], mask, g)


def test_end_to_end_linear_beats_baseline():
    # small but real: train a linear decoder on synthetic clips and compare
    # against the temporal mean on a held-out clip
    g = Geometry(48, 48, 8)
    mask = MeasurementMask(generate_building_block(4, 4, 8, "1/2", seed=1))
    videos = [(f"train{i}", synth_video(48, 48, 16, seed=20 + i)) for i in range(3)]
    ts = build_training_set(videos, mask, count=4000, seed=0)
    model = fit_linear(ts)

    test_frames = synth_video(48, 48, 8, seed=99)
    coded = encode_sequence(test_frames.astype(np.float64) / 255.0, mask, g)
    recon = reconstruct_sequence(coded, model, g)
    assert recon.shape == (8, 48, 48)

    baseline = temporal_mean_baseline(coded[0], mask, g).pixels
    score_model = np.mean([psnr(test_frames[i].astype(float), to_8bit(recon[i]).astype(float))
                           for i in range(8)])
    score_base = np.mean([psnr(test_frames[i].astype(float), to_8bit(baseline[i]).astype(float))
                          for i in range(8)])
    assert score_model > score_base
