"""Pure-numpy kernels, the fallback when the compiled module is absent.

Accumulation order is part of the contract: both backends add terms in
identical sequence (time ascending for encode, grid order for the overlap
scatter) so their outputs are bit-for-bit equal and reproducible.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def encode_frames(frames, block):
    """Masked temporal sum of one capture group.

    frames : (t, H, W) float array
    block  : (t, block_h, block_w) array in {0, 1}; tiled across the frame

    Returns the (H, W) coded frame in the dtype of ``frames``.  At each
    pixel the products are added in ascending frame order.
    """
    t, height, width = frames.shape
    tb, block_h, block_w = block.shape
    if tb != t:
        raise ValueError(f"block temporal length {tb} != frame count {t}")
    if height % block_h or width % block_w:
        raise ValueError("frame size is not a multiple of the block size")
    tiled = np.tile(block, (1, height // block_h, width // block_w))
    tiled = tiled.astype(frames.dtype)
    out = np.zeros((height, width), dtype=frames.dtype)
    for k in range(t):
        out += tiled[k] * frames[k]
    return out


def extract_windows(image, win_h, win_w, step_y, step_x):
    """Gather all sliding windows of an image into columns.

    Returns (win_h * win_w, n) in the image dtype, windows enumerated in
    grid order (y outer, x inner), each flattened C-order.
    """
    windows = sliding_window_view(image, (win_h, win_w))[::step_y, ::step_x]
    ny, nx = windows.shape[:2]
    return windows.reshape(ny * nx, win_h * win_w).T.copy()


def accumulate_windows(blocks, temporal_len, height, width, win_h, win_w, step_y, step_x):
    """Scatter-add decoded blocks back onto a volume.

    blocks : (temporal_len * win_h * win_w, n) float64, one column per
             window in grid order, matching :func:`extract_windows`.

    Returns ``(volume_sum, hit_count)`` where ``volume_sum`` is
    (temporal_len, height, width) float64 and ``hit_count`` is (height,
    width) float64 counting how many windows covered each pixel.  Blocks
    are added in grid order so both backends agree bitwise.
    """
    ny = (height - win_h) // step_y + 1
    nx = (width - win_w) // step_x + 1
    if blocks.shape[0] != temporal_len * win_h * win_w:
        raise ValueError("block rows do not match the window volume")
    if blocks.shape[1] != ny * nx:
        raise ValueError("block columns do not match the window grid")
    cubes = blocks.reshape(temporal_len, win_h, win_w, ny * nx)
    volume_sum = np.zeros((temporal_len, height, width), dtype=np.float64)
    hit_count = np.zeros((height, width), dtype=np.float64)
    i = 0
    for gy in range(ny):
        oy = gy * step_y
        for gx in range(nx):
            ox = gx * step_x
            volume_sum[:, oy:oy + win_h, ox:ox + win_w] += cubes[:, :, :, i]
            hit_count[oy:oy + win_h, ox:ox + win_w] += 1.0
            i += 1
    return volume_sum, hit_count


def gather_blocks(frames, f_idx, y_idx, x_idx, temporal_len, win_h, win_w):
    """Cut space-time blocks out of a frame stack at the given offsets.

    frames : (F, H, W) array, any dtype
    f_idx, y_idx, x_idx : equal-length integer arrays of block origins

    Returns (temporal_len * win_h * win_w, n) in the frames dtype, one
    flattened block per column.
    """
    f_idx = np.asarray(f_idx, dtype=np.int64)
    y_idx = np.asarray(y_idx, dtype=np.int64)
    x_idx = np.asarray(x_idx, dtype=np.int64)
    if not (len(f_idx) == len(y_idx) == len(x_idx)):
        raise ValueError("offset arrays must have equal length")
    for idx, extent, size in ((f_idx, temporal_len, frames.shape[0]),
                              (y_idx, win_h, frames.shape[1]),
                              (x_idx, win_w, frames.shape[2])):
        if len(idx) and (idx.min() < 0 or idx.max() + extent > size):
            raise ValueError("block offset falls outside the frame stack")
    windows = sliding_window_view(frames, (temporal_len, win_h, win_w))
    picked = windows[f_idx, y_idx, x_idx]
    n = picked.shape[0]
    return picked.reshape(n, temporal_len * win_h * win_w).T.copy()
