"""Both kernel backends must agree bit for bit, and each must match a
brute-force oracle written with plain Python loops."""

import numpy as np
import numpy.testing as npt
import pytest

from snapcs.kernels import _fallback

try:
    from snapcs.kernels import _native
    BACKENDS = [_fallback, _native]
except ImportError:
    _native = None
    BACKENDS = [_fallback]

needs_native = pytest.mark.skipif(_native is None, reason="compiled kernels not built")


def _random_case(seed, t=5, height=12, width=16, block_h=4, block_w=4):
    rng = np.random.default_rng(seed)
    frames = rng.random((t, height, width))
    block = (rng.random((t, block_h, block_w)) < 0.5).astype(np.uint8)
    return frames, block


@pytest.mark.parametrize("backend", BACKENDS)
def test_encode_matches_triple_loop_oracle(backend):
    frames, block = _random_case(0)
    t, height, width = frames.shape
    expected = np.zeros((height, width))
    for y in range(height):
        for x in range(width):
            acc = 0.0
            for k in range(t):
                acc += block[k, y % 4, x % 4] * frames[k, y, x]
            expected[y, x] = acc
    got = backend.encode_frames(frames, block)
    npt.assert_array_equal(got, expected)  # bit-identical, not just close


@needs_native
def test_backends_agree_bitwise():
    for seed in range(20):
        frames, block = _random_case(seed, t=7, height=20, width=24)
        npt.assert_array_equal(_fallback.encode_frames(frames, block),
                               _native.encode_frames(frames, block))

        coded = _fallback.encode_frames(frames, block)
        for win, step in ((8, 4), (4, 4), (12, 2)):
            a = _fallback.extract_windows(coded, win, win, step, step)
            b = _native.extract_windows(coded, win, win, step, step)
            npt.assert_array_equal(a, b)

        rng = np.random.default_rng(seed + 1000)
        ny, nx = (20 - 8) // 4 + 1, (24 - 8) // 4 + 1
        blocks = rng.random((7 * 64, ny * nx))
        va, ha = _fallback.accumulate_windows(blocks, 7, 20, 24, 8, 8, 4, 4)
        vb, hb = _native.accumulate_windows(blocks, 7, 20, 24, 8, 8, 4, 4)
        npt.assert_array_equal(va, vb)
        npt.assert_array_equal(ha, hb)

        stack = (rng.random((12, 20, 24)) * 255).astype(np.uint8)
        f_idx = rng.integers(0, 6, 40)
        y_idx = rng.integers(0, 4, 40) * 4
        x_idx = rng.integers(0, 5, 40) * 4
        npt.assert_array_equal(
            _fallback.gather_blocks(stack, f_idx, y_idx, x_idx, 7, 8, 8),
            _native.gather_blocks(stack, f_idx, y_idx, x_idx, 7, 8, 8))


@pytest.mark.parametrize("backend", BACKENDS)
def test_extract_windows_matches_slicing(backend):
    rng = np.random.default_rng(4)
    image = rng.random((16, 20))
    out = backend.extract_windows(image, 8, 8, 4, 4)
    ny, nx = 3, 4
    assert out.shape == (64, ny * nx)
    for gy in range(ny):
        for gx in range(nx):
            window = image[gy * 4:gy * 4 + 8, gx * 4:gx * 4 + 8]
            npt.assert_array_equal(out[:, gy * nx + gx], window.ravel())


@pytest.mark.parametrize("backend", BACKENDS)
def test_accumulate_windows_matches_manual_scatter(backend):
    rng = np.random.default_rng(5)
    t, height, width, win, step = 3, 12, 16, 8, 4
    ny, nx = 2, 3
    blocks = rng.random((t * win * win, ny * nx))
    vol, hits = backend.accumulate_windows(blocks, t, height, width, win, win, step, step)
    expected_vol = np.zeros((t, height, width))
    expected_hits = np.zeros((height, width))
    for gy in range(ny):
        for gx in range(nx):
            cube = blocks[:, gy * nx + gx].reshape(t, win, win)
            expected_vol[:, gy * step:gy * step + win, gx * step:gx * step + win] += cube
            expected_hits[gy * step:gy * step + win, gx * step:gx * step + win] += 1
    npt.assert_array_equal(vol, expected_vol)
    npt.assert_array_equal(hits, expected_hits)


@pytest.mark.parametrize("backend", BACKENDS)
def test_extract_then_accumulate_recovers_scaled_image(backend):
    # scattering the extracted windows back must give image * coverage
    rng = np.random.default_rng(6)
    image = rng.random((16, 16))
    windows = backend.extract_windows(image, 8, 8, 4, 4)
    vol, hits = backend.accumulate_windows(windows, 1, 16, 16, 8, 8, 4, 4)
    npt.assert_allclose(vol[0], image * hits, atol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_gather_blocks_matches_manual(backend):
    rng = np.random.default_rng(8)
    stack = (rng.random((10, 12, 16)) * 255).astype(np.uint8)
    f_idx = np.array([0, 3, 5])
    y_idx = np.array([0, 4, 4])
    x_idx = np.array([8, 0, 4])
    out = backend.gather_blocks(stack, f_idx, y_idx, x_idx, 4, 8, 8)
    assert out.shape == (4 * 64, 3) and out.dtype == np.uint8
    for j in range(3):
        cube = stack[f_idx[j]:f_idx[j] + 4,
                     y_idx[j]:y_idx[j] + 8, x_idx[j]:x_idx[j] + 8]
        npt.assert_array_equal(out[:, j], cube.ravel())


@pytest.mark.parametrize("backend", BACKENDS)
def test_gather_blocks_rejects_out_of_bounds(backend):
    stack = np.zeros((10, 12, 16), dtype=np.uint8)
    with pytest.raises(ValueError):
        backend.gather_blocks(stack, [7], [0], [0], 4, 8, 8)
    with pytest.raises(ValueError):
        backend.gather_blocks(stack, [0], [8], [0], 4, 8, 8)
    with pytest.raises(ValueError):
        backend.gather_blocks(stack, [0], [0], [-1], 4, 8, 8)


@pytest.mark.parametrize("backend", BACKENDS)
def test_encode_validates_shapes(backend):
    frames = np.zeros((4, 8, 8))
    with pytest.raises(ValueError):
        backend.encode_frames(frames, np.zeros((5, 4, 4), dtype=np.uint8))
    with pytest.raises(ValueError):
        backend.encode_frames(np.zeros((4, 10, 8)), np.zeros((4, 4, 4), dtype=np.uint8))
