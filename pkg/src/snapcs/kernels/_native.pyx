# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels. Mirrors _fallback.py exactly, including the order in
which floating-point terms are accumulated, so both backends return
bit-identical arrays."""

import numpy as np

cimport numpy as cnp


ctypedef fused frame_t:
    cnp.float32_t
    cnp.float64_t

ctypedef fused pixel_t:
    cnp.uint8_t
    cnp.float32_t
    cnp.float64_t


def encode_frames(const frame_t[:, :, ::1] frames, const cnp.uint8_t[:, :, ::1] block):
    cdef Py_ssize_t t = frames.shape[0]
    cdef Py_ssize_t height = frames.shape[1]
    cdef Py_ssize_t width = frames.shape[2]
    cdef Py_ssize_t block_h = block.shape[1]
    cdef Py_ssize_t block_w = block.shape[2]
    if block.shape[0] != t:
        raise ValueError(f"block temporal length {block.shape[0]} != frame count {t}")
    if height % block_h or width % block_w:
        raise ValueError("frame size is not a multiple of the block size")
    out_np = np.zeros((height, width), dtype=np.asarray(frames).dtype)
    cdef frame_t[:, ::1] out = out_np
    cdef Py_ssize_t k, y, x, by, bx
    for k in range(t):
        for y in range(height):
            by = y % block_h
            bx = 0
            for x in range(width):
                out[y, x] += (<frame_t> block[k, by, bx]) * frames[k, y, x]
                bx += 1
                if bx == block_w:
                    bx = 0
    return out_np


def extract_windows(const frame_t[:, ::1] image, Py_ssize_t win_h, Py_ssize_t win_w,
                    Py_ssize_t step_y, Py_ssize_t step_x):
    cdef Py_ssize_t height = image.shape[0]
    cdef Py_ssize_t width = image.shape[1]
    cdef Py_ssize_t ny = (height - win_h) // step_y + 1
    cdef Py_ssize_t nx = (width - win_w) // step_x + 1
    out_np = np.empty((win_h * win_w, ny * nx), dtype=np.asarray(image).dtype)
    cdef frame_t[:, ::1] out = out_np
    cdef Py_ssize_t gy, gx, wy, wx, col, row, oy, ox
    for gy in range(ny):
        oy = gy * step_y
        for gx in range(nx):
            ox = gx * step_x
            col = gy * nx + gx
            row = 0
            for wy in range(win_h):
                for wx in range(win_w):
                    out[row, col] = image[oy + wy, ox + wx]
                    row += 1
    return out_np


def accumulate_windows(const cnp.float64_t[:, ::1] blocks, Py_ssize_t temporal_len,
                       Py_ssize_t height, Py_ssize_t width,
                       Py_ssize_t win_h, Py_ssize_t win_w,
                       Py_ssize_t step_y, Py_ssize_t step_x):
    cdef Py_ssize_t ny = (height - win_h) // step_y + 1
    cdef Py_ssize_t nx = (width - win_w) // step_x + 1
    if blocks.shape[0] != temporal_len * win_h * win_w:
        raise ValueError("block rows do not match the window volume")
    if blocks.shape[1] != ny * nx:
        raise ValueError("block columns do not match the window grid")
    vol_np = np.zeros((temporal_len, height, width), dtype=np.float64)
    hits_np = np.zeros((height, width), dtype=np.float64)
    cdef cnp.float64_t[:, :, ::1] vol = vol_np
    cdef cnp.float64_t[:, ::1] hits = hits_np
    cdef Py_ssize_t gy, gx, col, row, k, wy, wx, oy, ox
    for gy in range(ny):
        oy = gy * step_y
        for gx in range(nx):
            ox = gx * step_x
            col = gy * nx + gx
            row = 0
            for k in range(temporal_len):
                for wy in range(win_h):
                    for wx in range(win_w):
                        vol[k, oy + wy, ox + wx] += blocks[row, col]
                        row += 1
            for wy in range(win_h):
                for wx in range(win_w):
                    hits[oy + wy, ox + wx] += 1.0
    return vol_np, hits_np


def gather_blocks(const pixel_t[:, :, ::1] frames, f_idx, y_idx, x_idx,
                  Py_ssize_t temporal_len, Py_ssize_t win_h, Py_ssize_t win_w):
    cdef cnp.int64_t[::1] fi = np.ascontiguousarray(f_idx, dtype=np.int64)
    cdef cnp.int64_t[::1] yi = np.ascontiguousarray(y_idx, dtype=np.int64)
    cdef cnp.int64_t[::1] xi = np.ascontiguousarray(x_idx, dtype=np.int64)
    cdef Py_ssize_t n = fi.shape[0]
    if yi.shape[0] != n or xi.shape[0] != n:
        raise ValueError("offset arrays must have equal length")
    out_np = np.empty((temporal_len * win_h * win_w, n), dtype=np.asarray(frames).dtype)
    cdef pixel_t[:, ::1] out = out_np
    cdef Py_ssize_t j, k, wy, wx, row, f0, y0, x0
    for j in range(n):
        f0 = fi[j]
        y0 = yi[j]
        x0 = xi[j]
        if (f0 < 0 or f0 + temporal_len > frames.shape[0]
                or y0 < 0 or y0 + win_h > frames.shape[1]
                or x0 < 0 or x0 + win_w > frames.shape[2]):
            raise ValueError(f"block offset {(f0, y0, x0)} falls outside the frame stack")
        row = 0
        for k in range(temporal_len):
            for wy in range(win_h):
                for wx in range(win_w):
                    out[row, j] = frames[f0 + k, y0 + wy, x0 + wx]
                    row += 1
    return out_np
