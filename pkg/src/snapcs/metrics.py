"""Reconstruction quality metrics on 8-bit-scale frames.

Both metrics take frames on the 0..255 scale (uint8 or float).  SSIM uses
the standard single-scale parameterization: an 11x11 Gaussian window with
sigma 1.5, stability constants K1=0.01 and K2=0.03, dynamic range 255 by
default, mean of the local map over valid window positions.
"""

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import convolve

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def to_8bit(volume):
    """[0, 1] float frames -> rounded uint8 frames."""
    arr = np.asarray(volume)
    return np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)


def psnr(reference, test, peak=255.0):
    """Peak signal-to-noise ratio in dB; identical inputs give +inf."""
    ref = np.asarray(reference, dtype=np.float64)
    other = np.asarray(test, dtype=np.float64)
    if ref.shape != other.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {other.shape}")
    diff = ref - other
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    half = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(coords * coords) / (2.0 * sigma * sigma))
    window = np.outer(g, g)
    return window / window.sum()


_WINDOW = _gaussian_window()


def ssim(reference, test, peak=255.0):
    """Mean structural similarity of two single frames.

    Local means, variances and the covariance are computed under the
    Gaussian window with the same moment formula (E[ab] - E[a]E[b]), so
    the score is exactly 1.0 for identical frames and symmetric in its
    arguments.
    """
    ref = np.asarray(reference, dtype=np.float64)
    other = np.asarray(test, dtype=np.float64)
    if ref.shape != other.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {other.shape}")
    if ref.ndim != 2:
        raise ValueError(f"ssim expects single 2-D frames, got shape {ref.shape}")
    if min(ref.shape) < SSIM_WINDOW:
        raise ValueError(
            f"frame {ref.shape} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")

    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2

    def smooth(img):
        return convolve(img, _WINDOW, mode="valid")

    mu1 = smooth(ref)
    mu2 = smooth(other)
    var1 = smooth(ref * ref) - mu1 * mu1
    var2 = smooth(other * other) - mu2 * mu2
    cov = smooth(ref * other) - mu1 * mu2

    numerator = (2.0 * mu1 * mu2 + c1) * (2.0 * cov + c2)
    denominator = (mu1 * mu1 + mu2 * mu2 + c1) * (var1 + var2 + c2)
    return float(np.mean(numerator / denominator))


@dataclass(frozen=True)
class FrameScore:
    index: int
    psnr: float
    ssim: float


@dataclass(frozen=True, eq=False)
class SequenceReport:
    """Per-frame scores plus averages (PSNR averaged over finite frames)."""

    frames: tuple
    mean_psnr: float
    mean_ssim: float

    def to_rows(self):
        return [{"frame": s.index, "psnr_db": s.psnr, "ssim": s.ssim}
                for s in self.frames]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["frame", "psnr_db", "ssim"])
            writer.writeheader()
            writer.writerows(self.to_rows())

    def write_json(self, path):
        payload = {
            "mean_psnr_db": self.mean_psnr,
            "mean_ssim": self.mean_ssim,
            "frames": self.to_rows(),
        }
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def evaluate_sequence(reference_frames, test_frames, peak=255.0):
    """Score a reconstructed stack frame by frame on the 8-bit scale.

    Both stacks are (F, H, W) on the 0..255 scale.  The mean PSNR skips
    infinite (bit-identical) frames; mean SSIM averages all frames.
    """
    ref = np.asarray(reference_frames)
    other = np.asarray(test_frames)
    if ref.shape != other.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {other.shape}")
    if ref.ndim != 3:
        raise ValueError(f"expected (frames, H, W) stacks, got shape {ref.shape}")
    scores = []
    for i in range(ref.shape[0]):
        scores.append(FrameScore(i, psnr(ref[i], other[i], peak),
                                 ssim(ref[i], other[i], peak)))
    psnrs = [s.psnr for s in scores if math.isfinite(s.psnr)]
    mean_psnr = float(np.mean(psnrs)) if psnrs else math.inf
    mean_ssim = float(np.mean([s.ssim for s in scores]))
    return SequenceReport(tuple(scores), mean_psnr, mean_ssim)
