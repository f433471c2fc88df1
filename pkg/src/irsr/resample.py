"""Separable bicubic resampling with the Keys cubic kernel.

Grid mapping is center-aligned: src = (dst + 0.5) * (in/out) - 0.5, the
convention that keeps constant and linear signals fixed. On downsampling
with antialiasing the kernel is dilated by in/out and renormalized; edges
are handled by clamp-to-edge index replication. Accumulation is float64
with a fixed per-output-pixel tap order, so results are independent of
any internal parallelism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .image import Image, clamp01


@dataclass(frozen=True)
class KernelSpec:
    """Keys cubic kernel parameters.

    a is the sharpness parameter (-0.5 is the de-facto bicubic used in SR
    benchmarking); antialias widens the support by in/out on downsampling.
    """

    a: float = -0.5
    antialias: bool = True


def keys_kernel(x: np.ndarray | float, a: float = -0.5) -> np.ndarray:
    """The piecewise-cubic Keys kernel; compact support (-2, 2)."""
    ax = np.abs(np.asarray(x, dtype=np.float64))
    ax2 = ax * ax
    ax3 = ax2 * ax
    near = (a + 2.0) * ax3 - (a + 3.0) * ax2 + 1.0
    far = a * ax3 - 5.0 * a * ax2 + 8.0 * a * ax - 4.0 * a
    return np.where(ax <= 1.0, near, np.where(ax < 2.0, far, 0.0))


def _contributions(
    n_in: int, n_out: int, spec: KernelSpec
) -> tuple[np.ndarray, np.ndarray]:
    """Tap indices (n_out, P) and row-normalized weights for one axis."""
    ratio = n_out / n_in
    if ratio < 1.0 and spec.antialias:
        width = 4.0 / ratio
        kern = lambda x: ratio * keys_kernel(ratio * x, spec.a)
    else:
        width = 4.0
        kern = lambda x: keys_kernel(x, spec.a)

    u = (np.arange(n_out, dtype=np.float64) + 0.5) / ratio - 0.5
    left = np.floor(u - width / 2.0).astype(np.int64)
    taps = int(math.ceil(width)) + 2
    indices = left[:, None] + np.arange(taps, dtype=np.int64)[None, :]
    weights = kern(u[:, None] - indices)
    weights /= weights.sum(axis=1, keepdims=True)
    indices = np.clip(indices, 0, n_in - 1)  # clamp-to-edge
    return indices, weights


def _resize_axis(data: np.ndarray, n_out: int, axis: int, spec: KernelSpec) -> np.ndarray:
    indices, weights = _contributions(data.shape[axis], n_out, spec)
    moved = np.moveaxis(data, axis, 0)
    gathered = moved[indices]  # (n_out, taps, ...)
    out = np.einsum("ot,ot...->o...", weights, gathered)
    return np.moveaxis(out, 0, axis)


def resize(img: Image, out_h: int, out_w: int, k: KernelSpec = KernelSpec()) -> Image:
    """Separable resize to (out_h, out_w); output clamped to [0, 1]."""
    if out_h < 1 or out_w < 1:
        raise DimensionError(f"output dimensions must be >= 1, got {out_h}x{out_w}")
    data = _resize_axis(img.data, out_h, 0, k)
    data = _resize_axis(data, out_w, 1, k)
    return Image(clamp01(data))


def degrade(img_hr: Image, scale: int, k: KernelSpec = KernelSpec()) -> Image:
    """Bicubic downsample by an integer factor; dims must divide by it."""
    if scale < 1:
        raise DimensionError(f"scale must be >= 1, got {scale}")
    if img_hr.height % scale or img_hr.width % scale:
        raise DimensionError(
            f"{img_hr.height}x{img_hr.width} not divisible by {scale}; modcrop first"
        )
    return resize(img_hr, img_hr.height // scale, img_hr.width // scale, k)


def degrade_x4(img_hr: Image, k: KernelSpec = KernelSpec()) -> Image:
    """The challenge degradation: bicubic x4 downsampling."""
    return degrade(img_hr, 4, k)


def bicubic_upscale(img_lr: Image, scale: int, k: KernelSpec = KernelSpec()) -> Image:
    """Bicubic upscale by an integer factor (the classical baseline)."""
    if scale < 1:
        raise DimensionError(f"scale must be >= 1, got {scale}")
    if scale == 1:
        return img_lr
    return resize(img_lr, img_lr.height * scale, img_lr.width * scale, k)


def nearest_upscale(img_lr: Image, scale: int) -> Image:
    """Upscale by pixel replication (nearest neighbor at integer scale)."""
    if scale < 1:
        raise DimensionError(f"scale must be >= 1, got {scale}")
    if scale == 1:
        return img_lr
    data = np.repeat(np.repeat(img_lr.data, scale, axis=0), scale, axis=1)
    return Image(data)
