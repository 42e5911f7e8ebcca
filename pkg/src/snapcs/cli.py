"""Command-line interface.

Subcommands cover the full workflow: make-mask, build-dataset,
train-linear, train-mlp, encode, reconstruct, evaluate, report.  All
domain failures exit with status 1 and a one-line message on stderr.
"""

import argparse
import csv
import json
import sys
import time
from pathlib import Path

from . import datasets, encoder, linear, metrics, mlp, pipeline, video_io
from .errors import SnapcsError
from .geometry import Geometry
from .linear import LINEAR_MAGIC
from .mask import (MeasurementMask, generate_building_block, load_mask,
                   solvability_report)
from .mlp import MLP_MAGIC, TrainConfig


def _dims2(text):
    try:
        w, h = (int(p) for p in text.lower().split("x"))
        return w, h
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None


def _dims3(text):
    try:
        w, h, t = (int(p) for p in text.lower().split("x"))
        return w, h, t
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxHxT, got {text!r}") from None


def _snr_range(text):
    try:
        lo, hi = (float(p) for p in text.split(":"))
        return lo, hi
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI in dB, got {text!r}") from None


def _load_model(path):
    """Detect the decoder type by magic and load it."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == LINEAR_MAGIC:
        return linear.load_linear_model(path)
    if magic == MLP_MAGIC:
        return mlp.load_mlp_model(path)
    raise SnapcsError(f"{path}: not a decoder model file (magic {magic!r})")


def _cmd_make_mask(args):
    block = generate_building_block(*args.block, density=args.density,
                                    seed=args.seed, exact_count=not args.bernoulli)
    mask = MeasurementMask(block)
    mask.save(args.out)
    report = solvability_report(mask)
    n_open = int(block.cells.sum())
    print(f"wrote {args.out}: block {block.block_w}x{block.block_h}x"
          f"{block.temporal_len}, {n_open}/{block.cells.size} open cells, "
          f"sha256 {mask.sha256_hex[:16]}")
    if not report.solvable:
        print(f"warning: pixels {list(report.dead_pixels)} are never exposed; "
              "the linear decoder will be singular", file=sys.stderr)
    return 0


def _cmd_build_dataset(args):
    mask = load_mask(args.mask)
    noise = encoder.NoiseSpec("none")
    if args.noise_snr is not None:
        noise = encoder.NoiseSpec("gaussian-snr", args.noise_snr, args.noise_seed)
    videos = []
    for path in args.videos:
        frames = video_io.load_frames(path, to_grayscale=args.grayscale)
        frames = video_io.reflect_pad_frames(frames, mask.block.block_w,
                                             mask.block.block_h)
        videos.append((Path(path).stem or str(path), frames))
    patch_w, patch_h = args.patch
    ts = datasets.build_training_set(videos, mask, args.count, patch_w, patch_h,
                                     seed=args.seed, noise=noise)
    datasets.save_training_set(args.out, ts)
    print(f"wrote {args.out}: {ts.sample_count} blocks of {ts.n_voxels} voxels, "
          f"noise {noise.kind}")
    return 0


def _cmd_train_linear(args):
    ts = datasets.load_training_set(args.dataset)
    model = datasets.fit_linear(ts, ridge=args.ridge,
                                allow_pseudo_inverse=args.pinv)
    linear.save_linear_model(args.out, model)
    print(f"wrote {args.out}: {model.n_voxels}x{model.n_measurements} weights "
          f"from {model.sample_count} samples (ridge {model.ridge:g})")
    return 0


def _cmd_train_mlp(args):
    ts = datasets.load_training_set(args.dataset)
    config = TrainConfig(
        hidden_layers=args.layers, iterations=args.iterations,
        batch_size=args.batch_size, learning_rate=args.learning_rate,
        momentum=args.momentum, clip_threshold=args.clip,
        weight_decay=args.weight_decay, lr_drop_factor=args.drop_factor,
        lr_drop_iterations=tuple(args.drop_at) if args.drop_at else None,
        val_fraction=args.val_fraction, seed=args.seed, log_every=args.log_every)
    started = time.perf_counter()
    model, result = datasets.fit_mlp(ts, config)
    elapsed = time.perf_counter() - started
    mlp.save_mlp_model(args.out, model)
    if args.log_csv:
        with open(args.log_csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["iteration", "lr",
                                                    "train_mse", "val_mse"])
            writer.writeheader()
            writer.writerows(result.log)
    print(f"wrote {args.out}: {config.hidden_layers} hidden layers, "
          f"{result.iterations_run} iterations in {elapsed:.1f}s, "
          f"best val MSE {result.best_val_mse:.3e} at iteration {result.best_iteration}")
    return 0


def _cmd_encode(args):
    mask = load_mask(args.mask)
    result = video_io.ingest_video(args.video, mask.temporal_len,
                                   block_w=mask.block.block_w,
                                   block_h=mask.block.block_h,
                                   to_grayscale=args.grayscale)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    groups = result.groups if args.group is None else [result.groups[args.group]]
    for i, volume in enumerate(groups):
        coded = encoder.encode(volume, mask)
        encoder.write_coded_frame(out_dir / f"coded_{i:04d}.raw", coded)
    if result.dropped_frames:
        print(f"note: dropped {result.dropped_frames} trailing frames short of a "
              f"{mask.temporal_len}-frame group", file=sys.stderr)
    print(f"wrote {len(groups)} coded frame(s) to {out_dir}")
    return 0


def _cmd_reconstruct(args):
    model = _load_model(args.model)
    mask = load_mask(args.mask)
    patch_w, patch_h = args.patch
    if patch_w * patch_h != model.n_measurements:
        raise SnapcsError(
            f"patch {patch_w}x{patch_h} has {patch_w * patch_h} pixels but the "
            f"model expects {model.n_measurements}")
    if model.mask_sha256 is not None and model.mask_sha256 != mask.sha256:
        raise SnapcsError("model was trained against a different mask")
    coded_paths = sorted(args.coded)
    volumes = []
    started = time.perf_counter()
    for path in coded_paths:
        coded = encoder.read_coded_frame(path)
        geometry = Geometry(coded.values.shape[1], coded.values.shape[0],
                            coded.temporal_len, patch_w, patch_h,
                            mask.block.block_w, mask.block.block_h)
        volumes.append(pipeline.reconstruct(coded, model, geometry))
    elapsed = time.perf_counter() - started
    frames = video_io.export_frames(volumes, crop_size=args.crop)
    if args.format == "pgm":
        video_io.write_pgm_sequence(args.out, frames)
    else:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        video_io.write_raw_video(Path(args.out) / "video.raw.json", frames)
    print(f"reconstructed {frames.shape[0]} frames in {elapsed:.2f}s -> {args.out}")
    return 0


def _cmd_evaluate(args):
    ref = video_io.load_frames(args.reference)
    test = video_io.load_frames(args.test)
    n = min(ref.shape[0], test.shape[0])
    if ref.shape[0] != test.shape[0]:
        print(f"note: comparing the first {n} frames "
              f"({ref.shape[0]} reference vs {test.shape[0]} test)", file=sys.stderr)
    report = metrics.evaluate_sequence(ref[:n], test[:n])
    if args.csv:
        report.write_csv(args.csv)
    if args.json:
        report.write_json(args.json)
    print(f"mean PSNR {report.mean_psnr:.2f} dB, mean SSIM {report.mean_ssim:.4f} "
          f"over {n} frames")
    return 0


def _cmd_report(args):
    rows = []
    for path in args.inputs:
        payload = json.loads(Path(path).read_text())
        rows.append({"source": str(path),
                     "mean_psnr_db": payload["mean_psnr_db"],
                     "mean_ssim": payload["mean_ssim"],
                     "frames": len(payload.get("frames", []))})
    width = max(len(r["source"]) for r in rows)
    print(f"{'source':<{width}}  {'PSNR dB':>8}  {'SSIM':>7}  frames")
    for r in rows:
        print(f"{r['source']:<{width}}  {r['mean_psnr_db']:>8.2f}  "
              f"{r['mean_ssim']:>7.4f}  {r['frames']:>6}")
    if args.json:
        Path(args.json).write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="snapcs",
        description="Coded-exposure video compressive sensing toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-mask", help="generate a binary measurement mask")
    p.add_argument("--block", type=_dims3, default=(4, 4, 16),
                   help="building block WxHxT (default 4x4x16)")
    p.add_argument("--density", default="1/2",
                   help="fraction of open cells (default 1/2)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bernoulli", action="store_true",
                   help="draw cells i.i.d. instead of forcing the exact count")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=_cmd_make_mask)

    p = sub.add_parser("build-dataset", help="sample training blocks from videos")
    p.add_argument("--mask", required=True)
    p.add_argument("--patch", type=_dims2, default=(8, 8), help="patch WxH (default 8x8)")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-snr", type=_snr_range, default=None, metavar="LO:HI",
                   help="add per-block Gaussian noise at an SNR drawn from [LO, HI] dB")
    p.add_argument("--noise-seed", type=int, default=0)
    p.add_argument("--grayscale", action="store_true",
                   help="BT.601-convert RGB raw video")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("videos", nargs="+", help="PGM directories or raw-stack .json files")
    p.set_defaults(func=_cmd_build_dataset)

    p = sub.add_parser("train-linear", help="solve the closed-form linear decoder")
    p.add_argument("--dataset", required=True)
    p.add_argument("--ridge", type=float, default=0.0)
    p.add_argument("--pinv", action="store_true",
                   help="fall back to the pseudo-inverse when singular")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=_cmd_train_linear)

    p = sub.add_parser("train-mlp", help="train the MLP decoder with SGD")
    p.add_argument("--dataset", required=True)
    p.add_argument("--layers", type=int, required=True, help="hidden layer count")
    p.add_argument("--iterations", type=int, required=True)
    p.add_argument("--batch-size", type=int, default=200)
    p.add_argument("--learning-rate", type=float, default=0.01)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--clip", type=float, default=10.0)
    p.add_argument("--weight-decay", type=float, default=1e-5)
    p.add_argument("--drop-at", type=int, action="append", default=None,
                   help="iteration to divide the learning rate (repeatable; "
                        "default: once at 75%% of the budget)")
    p.add_argument("--drop-factor", type=float, default=10.0)
    p.add_argument("--val-fraction", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log-every", type=int, default=100)
    p.add_argument("--log-csv", default=None, help="write the training log as CSV")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=_cmd_train_mlp)

    p = sub.add_parser("encode", help="simulate coded-exposure capture")
    p.add_argument("--mask", required=True)
    p.add_argument("--video", required=True, help="PGM directory or raw-stack .json")
    p.add_argument("--group", type=int, default=None,
                   help="encode only this capture group (default: all)")
    p.add_argument("--grayscale", action="store_true")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("reconstruct", help="decode coded frames into video")
    p.add_argument("--model", required=True, help=".scsl or .scsn decoder file")
    p.add_argument("--mask", required=True)
    p.add_argument("--patch", type=_dims2, default=(8, 8))
    p.add_argument("--crop", type=_dims2, default=None,
                   help="crop the output to WxH (undo ingest padding)")
    p.add_argument("--format", choices=("pgm", "raw"), default="pgm")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.add_argument("coded", nargs="+", help="coded .raw files (sorted)")
    p.set_defaults(func=_cmd_reconstruct)

    p = sub.add_parser("evaluate", help="PSNR/SSIM of a reconstruction")
    p.add_argument("--reference", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--csv", default=None, help="write per-frame scores as CSV")
    p.add_argument("--json", default=None, help="write scores as JSON")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("report", help="tabulate evaluate JSON outputs")
    p.add_argument("inputs", nargs="+", help="JSON files from 'evaluate --json'")
    p.add_argument("--json", default=None, help="write the merged table as JSON")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SnapcsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
