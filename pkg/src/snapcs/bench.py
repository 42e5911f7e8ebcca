"""Benchmarks: compiled kernels vs the numpy fallback, and end-to-end
reconstruction throughput.

Run as ``python -m snapcs.bench kernels`` or ``python -m snapcs.bench
reconstruct``.  The kernel benchmark also asserts that both backends
return bit-identical arrays, which is the contract that makes the
compiled module an optional dependency.
"""

import argparse
import json
import sys
import time

import numpy as np

from . import pipeline
from .encoder import encode
from .geometry import Geometry, VideoVolume
from .kernels import _fallback, backend
from .linear import LinearModel
from .mask import MeasurementMask, generate_building_block
from .mlp import MlpModel, NormStats, init_mlp

try:
    from .kernels import _native
except ImportError:
    _native = None


def _time(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - start)
    return best, result


def _bench_kernels(args):
    rng = np.random.default_rng(7)
    t, height, width = 16, args.size, args.size
    frames = rng.random((t, height, width))
    block = (rng.random((t, 4, 4)) < 0.5).astype(np.uint8)
    coded = _fallback.encode_frames(frames, block)
    windows = _fallback.extract_windows(coded, 8, 8, 4, 4)
    blocks = rng.random((t * 64, windows.shape[1]))
    n_gather = 20000
    stack = (rng.random((64, height, width)) * 255).astype(np.uint8)
    f_idx = rng.integers(0, 64 - t + 1, n_gather)
    y_idx = rng.integers(0, (height - 8) // 4 + 1, n_gather) * 4
    x_idx = rng.integers(0, (width - 8) // 4 + 1, n_gather) * 4

    cases = [
        ("encode_frames", lambda mod: mod.encode_frames(frames, block)),
        ("extract_windows", lambda mod: mod.extract_windows(coded, 8, 8, 4, 4)),
        ("accumulate_windows",
         lambda mod: mod.accumulate_windows(blocks, t, height, width, 8, 8, 4, 4)),
        ("gather_blocks",
         lambda mod: mod.gather_blocks(stack, f_idx, y_idx, x_idx, t, 8, 8)),
    ]

    rows = []
    print(f"kernel benchmark at {width}x{height}x{t} "
          f"(native {'available' if _native else 'NOT built'})")
    for name, call in cases:
        fb_time, fb_result = _time(lambda: call(_fallback), args.repeats)
        row = {"kernel": name, "fallback_s": fb_time}
        if _native is not None:
            nat_time, nat_result = _time(lambda: call(_native), args.repeats)
            row["native_s"] = nat_time
            row["speedup"] = fb_time / nat_time
            fb_flat = fb_result if isinstance(fb_result, np.ndarray) else fb_result[0]
            nat_flat = nat_result if isinstance(nat_result, np.ndarray) else nat_result[0]
            if not np.array_equal(fb_flat, nat_flat):
                raise AssertionError(f"{name}: backends disagree")
            row["identical"] = True
            print(f"  {name:<20} fallback {fb_time * 1e3:8.2f} ms   "
                  f"native {nat_time * 1e3:8.2f} ms   x{row['speedup']:.1f}   bitwise equal")
        else:
            print(f"  {name:<20} fallback {fb_time * 1e3:8.2f} ms")
        rows.append(row)
    if args.json:
        print(json.dumps(rows, indent=2))
    return 0


def _random_linear(geometry, rng):
    weights = rng.uniform(0, 1.0 / geometry.n_measurements,
                          (geometry.n_voxels, geometry.n_measurements))
    return LinearModel(weights)


def _random_mlp(geometry, layers, rng_seed):
    params = init_mlp(layers, geometry.n_voxels, geometry.n_measurements, rng_seed)
    stats = NormStats(np.zeros(geometry.n_measurements),
                      np.ones(geometry.n_measurements))
    return MlpModel(params, stats)


def _bench_reconstruct(args):
    rng = np.random.default_rng(11)
    geometry = Geometry(args.size, args.size, 16)
    block = generate_building_block(4, 4, 16, "1/2", seed=3)
    mask = MeasurementMask(block)
    volume = VideoVolume(rng.random((16, args.size, args.size)), geometry)
    coded = encode(volume, mask)

    models = [("linear", _random_linear(geometry, rng)),
              (f"mlp-{args.layers}", _random_mlp(geometry, args.layers, 5))]
    rows = []
    print(f"reconstruction benchmark at {args.size}x{args.size}x16 "
          f"({geometry.patch_count} patches, kernels: {backend()})")
    for name, model in models:
        elapsed, _ = _time(lambda: pipeline.reconstruct(coded, model, geometry),
                           args.repeats)
        rows.append({"decoder": name, "seconds": elapsed})
        print(f"  {name:<8} {elapsed:8.3f} s")
    if args.json:
        print(json.dumps(rows, indent=2))
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(prog="python -m snapcs.bench")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("kernels", help="compare compiled and fallback kernels")
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_bench_kernels)

    p = sub.add_parser("reconstruct", help="time end-to-end reconstruction")
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--layers", type=int, default=7)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_bench_reconstruct)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
