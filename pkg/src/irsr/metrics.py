"""The challenge scoring stack: PSNR, SSIM, and Score = PSNR + 20*SSIM,
computed on the luminance channel under the modcrop/shave protocol.

SSIM uses the canonical parameters: 11x11 Gaussian window with sigma 1.5,
K1 = 0.01, K2 = 0.03, dynamic range 1.0, and the map is aggregated over
the valid (unpadded) region only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .errors import DimensionError, ImageError
from .image import Image, modcrop, shave, to_luminance

# Records store this ceiling instead of the infinite-PSNR sentinel so
# aggregation stays total; the flag marks affected records.
PSNR_CAP_DB = 100.0


@dataclass(frozen=True)
class SsimParams:
    window_size: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0

    @property
    def c1(self) -> float:
        return (self.k1 * self.data_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.data_range) ** 2

    def window(self) -> np.ndarray:
        """Normalized 1-D Gaussian; the 2-D window is its outer product."""
        half = (self.window_size - 1) / 2.0
        x = np.arange(self.window_size, dtype=np.float64) - half
        w = np.exp(-(x * x) / (2.0 * self.sigma * self.sigma))
        return w / w.sum()

    def describe(self) -> dict:
        return {
            "window_size": self.window_size,
            "sigma": self.sigma,
            "k1": self.k1,
            "k2": self.k2,
            "data_range": self.data_range,
        }


@dataclass(frozen=True)
class EvalRecord:
    """Per-image metric triple plus identification."""

    name: str
    psnr_db: float
    ssim: float
    score: float
    psnr_capped: bool = False


def psnr(ref: Image, test: Image) -> float:
    """10*log10(1/MSE) in dB over all samples; +inf when images match."""
    if ref.shape != test.shape:
        raise DimensionError(f"psnr dims differ: {ref.shape} vs {test.shape}")
    diff = ref.data - test.data
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _windowed(arr: np.ndarray, window: np.ndarray) -> np.ndarray:
    """Separable window correlation, cropped to the valid region."""
    half = (window.size - 1) // 2
    out = correlate1d(arr, window, axis=0, mode="constant")
    out = correlate1d(out, window, axis=1, mode="constant")
    return out[half:-half, half:-half]


def ssim(ref: Image, test: Image, p: SsimParams = SsimParams()) -> float:
    """Mean SSIM over the valid map of two single-channel images."""
    if ref.shape != test.shape:
        raise DimensionError(f"ssim dims differ: {ref.shape} vs {test.shape}")
    if ref.channels != 1:
        raise ImageError("ssim expects single-channel images; reduce to luminance")
    if min(ref.height, ref.width) < p.window_size:
        raise DimensionError(
            f"image {ref.height}x{ref.width} smaller than the "
            f"{p.window_size}x{p.window_size} SSIM window"
        )
    x = ref.plane()
    y = test.plane()
    win = p.window()

    mu_x = _windowed(x, win)
    mu_y = _windowed(y, win)
    sigma_x = _windowed(x * x, win) - mu_x * mu_x
    sigma_y = _windowed(y * y, win) - mu_y * mu_y
    sigma_xy = _windowed(x * y, win) - mu_x * mu_y

    num = (2.0 * mu_x * mu_y + p.c1) * (2.0 * sigma_xy + p.c2)
    den = (mu_x * mu_x + mu_y * mu_y + p.c1) * (sigma_x + sigma_y + p.c2)
    return float(np.mean(num / den))


def score(psnr_db: float, ssim_value: float) -> float:
    """The challenge metric: PSNR + 20 * SSIM."""
    return psnr_db + 20.0 * ssim_value


def evaluate_pair(
    gt: Image,
    sr: Image,
    scale: int,
    shave_border: int,
    p: SsimParams = SsimParams(),
    name: str = "",
) -> EvalRecord:
    """Apply the evaluation protocol to one ground-truth/restored pair.

    The ground truth is reduced to luminance, modcropped to the scale and
    shaved; the restored image (which must already match the modcropped
    dims) is reduced and shaved the same way.
    """
    gt_lum = modcrop(to_luminance(gt), scale)
    expected = (gt_lum.height, gt_lum.width)
    if (sr.height, sr.width) != expected:
        raise DimensionError(
            f"restored dims {sr.height}x{sr.width} do not match modcropped "
            f"ground truth {expected[0]}x{expected[1]}"
        )
    gt_prep = shave(gt_lum, shave_border)
    sr_prep = shave(to_luminance(sr), shave_border)

    psnr_db = psnr(gt_prep, sr_prep)
    capped = not math.isfinite(psnr_db)
    if capped:
        psnr_db = PSNR_CAP_DB
    ssim_value = ssim(gt_prep, sr_prep, p)
    return EvalRecord(
        name=name,
        psnr_db=psnr_db,
        ssim=ssim_value,
        score=score(psnr_db, ssim_value),
        psnr_capped=capped,
    )
