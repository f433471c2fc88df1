"""Seed-fixed synthetic evaluation set: smooth Gaussian blobs plus step
edges on a gentle gradient, in the spirit of weakly textured thermal
frames. Stands in for externally licensed evaluation data.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .image import Image, PixelFormat, store_image

# Heights/widths deliberately include non-multiples of 4 so the modcrop
# path is exercised end to end.
_DIMS = [
    (120, 160), (121, 163), (132, 148), (140, 140),
    (117, 181), (128, 172), (144, 131), (136, 150),
    (125, 167), (152, 129), (133, 157), (146, 139),
]


def generate_demo_image(seed: int, index: int, height: int, width: int) -> Image:
    """One deterministic frame of blobs, step edges, and a base gradient."""
    rng = np.random.default_rng([seed, index])
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)

    base = 0.35 + 0.15 * rng.random()
    data = base + 0.10 * (yy / height) * (2 * rng.random() - 1)
    data += 0.10 * (xx / width) * (2 * rng.random() - 1)

    for _ in range(int(rng.integers(3, 7))):
        cy = rng.uniform(0.1, 0.9) * height
        cx = rng.uniform(0.1, 0.9) * width
        sigma = rng.uniform(4.0, 14.0)
        amp = rng.uniform(-0.35, 0.45)
        data += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma**2))

    for _ in range(int(rng.integers(1, 4))):
        y0 = int(rng.integers(0, height - 12))
        x0 = int(rng.integers(0, width - 12))
        rh = int(rng.integers(8, max(9, height // 3)))
        rw = int(rng.integers(8, max(9, width // 3)))
        data[y0 : y0 + rh, x0 : x0 + rw] += rng.uniform(-0.25, 0.3)

    return Image(np.clip(data, 0.0, 1.0))


def generate_demo_set(out_dir: str | Path, count: int = 12, seed: int = 7) -> list[Path]:
    """Write `count` 16-bit grayscale frames; byte-stable for a fixed seed."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(count):
        h, w = _DIMS[i % len(_DIMS)]
        if i >= len(_DIMS):  # nudge dims so repeated shapes still differ
            h += 4 * (i // len(_DIMS))
        img = generate_demo_image(seed, i, h, w)
        path = out_dir / f"demo_{i:02d}.png"
        store_image(img, path, PixelFormat(depth=16, channels=1))
        paths.append(path)
    return paths
