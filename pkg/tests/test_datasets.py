import numpy as np
import numpy.testing as npt
import pytest

from snapcs.datasets import (TrainingSet, _quotas, build_training_set,
                             fit_linear, fit_mlp, load_training_set,
                             measure_blocks, save_training_set, scaled_blocks)
from snapcs.encoder import NoiseSpec
from snapcs.errors import FormatError
from snapcs.linear import MomentAccumulator, solve
from snapcs.mask import MeasurementMask, generate_building_block
from snapcs.mlp import TrainConfig

from _synth import synth_video


def small_mask(seed=0, t=4):
    return MeasurementMask(generate_building_block(4, 4, t, "1/2", seed=seed))


def test_quotas_largest_remainder():
    assert _quotas(10, [1, 1, 1]) == [4, 3, 3]
    assert _quotas(7, [3, 1]) == [5, 2]
    assert _quotas(5, [10, 10]) == [3, 2]  # tie broken by position, stably
    assert _quotas(6, [2, 2, 2]) == [2, 2, 2]
    assert sum(_quotas(101, [7, 11, 3, 20])) == 101
    assert _quotas(1, [5, 500]) == [0, 1]


def test_build_training_set_shapes_and_manifest():
    mask = small_mask()
    videos = [("a", synth_video(16, 16, 12, seed=1)),
              ("b", synth_video(24, 16, 6, seed=2))]
    ts = build_training_set(videos, mask, count=90, patch_w=8, patch_h=8, seed=5)
    assert ts.blocks.shape == (8 * 8 * 4, 90)
    assert ts.blocks.dtype == np.uint8
    assert ts.measurements.shape == (64, 90)
    assert ts.measurements.dtype == np.float64
    assert ts.patch_shape == (4, 8, 8)
    m = ts.manifest
    assert m["count"] == 90 and m["seed"] == 5
    assert m["offset_layout"] == "frame-major"
    assert [v["quota"] for v in m["videos"]] == _quotas(90, [12, 6])
    assert not any(v["with_replacement"] for v in m["videos"])


def test_measurements_are_mask_times_scaled_blocks():
    mask = small_mask(seed=3)
    ts = build_training_set([("v", synth_video(16, 16, 10, seed=4))],
                            mask, count=50, seed=1)
    expected = mask.patch_matrix(8, 8) @ scaled_blocks(ts.blocks)
    npt.assert_array_equal(ts.measurements, expected)  # single chunk, exact


def test_sampled_blocks_come_from_the_video():
    # one spatial position, two temporal offsets: every sampled column must
    # equal one of the two possible groups, flattened frame-major
    mask = small_mask()
    rng = np.random.default_rng(6)
    frames = rng.integers(0, 256, (5, 8, 8), dtype=np.uint8)
    ts = build_training_set([("v", frames)], mask, count=6, seed=2)
    candidates = {frames[0:4].tobytes(), frames[1:5].tobytes()}
    for col in ts.blocks.T:
        assert col.tobytes() in candidates
    assert {c.tobytes() for c in ts.blocks.T} == candidates  # both appear in 6 draws


def test_with_replacement_when_quota_exceeds_positions():
    mask = small_mask()
    frames = (np.arange(4 * 8 * 8) % 256).astype(np.uint8).reshape(4, 8, 8)
    ts = build_training_set([("tiny", frames)], mask, count=5, seed=0)
    assert ts.manifest["videos"][0]["with_replacement"]
    for col in ts.blocks.T:
        npt.assert_array_equal(col, frames.ravel())


def test_build_training_set_is_deterministic():
    mask = small_mask(seed=9)
    videos = [("a", synth_video(16, 16, 9, seed=7)),
              ("b", synth_video(16, 16, 9, seed=8))]
    a = build_training_set(videos, mask, count=40, seed=3)
    b = build_training_set(videos, mask, count=40, seed=3)
    npt.assert_array_equal(a.blocks, b.blocks)
    npt.assert_array_equal(a.measurements, b.measurements)
    c = build_training_set(videos, mask, count=40, seed=4)
    assert not np.array_equal(a.blocks, c.blocks)


def test_build_training_set_validation():
    mask = small_mask()
    good = synth_video(16, 16, 8, seed=0)
    with pytest.raises(ValueError):
        build_training_set([], mask, count=10)
    with pytest.raises(ValueError):
        build_training_set([("v", good)], mask, count=0)
    with pytest.raises(ValueError):
        build_training_set([("v", good.astype(np.float64))], mask, count=10)
    with pytest.raises(ValueError):
        build_training_set([("v", good[:, :14, :])], mask, count=10)
    with pytest.raises(ValueError):
        build_training_set([("v", good[:3])], mask, count=10)  # shorter than t


def test_noisy_training_set_is_float32():
    mask = small_mask()
    noise = NoiseSpec("gaussian-snr", (20.0, 40.0), seed=7)
    ts = build_training_set([("v", synth_video(16, 16, 8, seed=1))],
                            mask, count=30, noise=noise, seed=0)
    assert ts.measurements.dtype == np.float32
    clean = measure_blocks(mask.patch_matrix(8, 8), ts.blocks)
    assert not np.array_equal(ts.measurements, clean.astype(np.float32))
    # noise is seeded: rebuilding gives the same bytes
    again = build_training_set([("v", synth_video(16, 16, 8, seed=1))],
                               mask, count=30, noise=noise, seed=0)
    npt.assert_array_equal(ts.measurements, again.measurements)


def test_save_load_round_trip_clean(tmp_path):
    mask = small_mask(seed=2)
    ts = build_training_set([("v", synth_video(16, 16, 10, seed=3))],
                            mask, count=25, seed=6)
    path = tmp_path / "set.scsd"
    save_training_set(path, ts)
    again = load_training_set(path)
    npt.assert_array_equal(again.blocks, ts.blocks)
    npt.assert_array_equal(again.measurements, ts.measurements)  # regenerated, bit-equal
    assert again.manifest == ts.manifest
    assert again.mask.sha256 == ts.mask.sha256
    assert again.noise == ts.noise
    save_training_set(tmp_path / "again.scsd", again)
    assert (tmp_path / "again.scsd").read_bytes() == path.read_bytes()


def test_save_load_round_trip_noisy(tmp_path):
    mask = small_mask(seed=2)
    noise = NoiseSpec("gaussian-snr", (25.0, 25.0), seed=11)
    ts = build_training_set([("v", synth_video(16, 16, 10, seed=3))],
                            mask, count=25, noise=noise, seed=6)
    path = tmp_path / "set.scsd"
    save_training_set(path, ts)
    again = load_training_set(path)
    assert again.noise == noise
    npt.assert_array_equal(again.measurements, ts.measurements)
    assert again.measurements.dtype == np.float32


def test_load_rejects_corrupt_files(tmp_path):
    mask = small_mask()
    ts = build_training_set([("v", synth_video(16, 16, 8, seed=0))],
                            mask, count=10, seed=0)
    path = tmp_path / "set.scsd"
    save_training_set(path, ts)
    data = path.read_bytes()

    (tmp_path / "magic").write_bytes(b"XXXX" + data[4:])
    with pytest.raises(FormatError):
        load_training_set(tmp_path / "magic")

    (tmp_path / "short").write_bytes(data[:-5])
    with pytest.raises(FormatError):
        load_training_set(tmp_path / "short")

    (tmp_path / "trailing").write_bytes(data + b"\x00")
    with pytest.raises(FormatError):
        load_training_set(tmp_path / "trailing")

    # flip one cell inside the embedded mask record: digest check must fire
    mask_rec_at = data.index(b"SCSM")
    tampered = bytearray(data)
    cell_at = mask_rec_at + 28 + 3  # past the mask header, inside the cells
    tampered[cell_at] ^= 1
    (tmp_path / "tampered").write_bytes(bytes(tampered))
    with pytest.raises(FormatError):
        load_training_set(tmp_path / "tampered")


def test_fit_linear_matches_direct_solve():
    mask = small_mask(seed=6)  # solvable at t=4: no dead block pixels
    ts = build_training_set([("v", synth_video(16, 16, 12, seed=5))],
                            mask, count=400, patch_w=4, patch_h=4, seed=1)
    model = fit_linear(ts)
    acc = MomentAccumulator(ts.n_voxels, ts.n_measurements)
    acc.accumulate(scaled_blocks(ts.blocks), ts.measurements)
    direct = solve(acc)
    npt.assert_array_equal(model.weights, direct.weights)
    assert model.mask_sha256 == mask.sha256
    assert model.sample_count == 400


def test_fit_mlp_smoke():
    mask = small_mask(seed=4)
    ts = build_training_set([("v", synth_video(16, 16, 12, seed=5))],
                            mask, count=300, patch_w=4, patch_h=4, seed=1)
    config = TrainConfig(hidden_layers=1, iterations=60, batch_size=100,
                         val_fraction=0.1, seed=0, log_every=30)
    model, result = fit_mlp(ts, config)
    assert model.mask_sha256 == mask.sha256
    assert model.n_voxels == ts.n_voxels
    assert result.iterations_run == 60
    out = model.decode_measurements(ts.measurements[:, :4])
    assert out.shape == (ts.n_voxels, 4)
