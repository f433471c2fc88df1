"""Image buffer type, lossless 8/16-bit file I/O, and the geometric
bookkeeping operations (modcrop, shave, luminance reduction) used by the
evaluation protocol.

Pixels live as float64 in [0, 1]; quantization happens only at file
boundaries, with round-half-to-even so stored codes are platform stable.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .errors import (
    DimensionError,
    ImageError,
    ImageReadError,
    ImageWriteError,
    UnsupportedFormatError,
)

# ITU-R BT.601 luma weights for tri-channel reduction.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_PNG_PARAMS = [cv2.IMWRITE_PNG_COMPRESSION, 3]


@dataclass(frozen=True)
class Image:
    """Immutable intensity buffer of shape (H, W, C), C in {1, 3}.

    Values are float64 in [0, 1]; the backing array is marked read-only so
    images are safe to share across workers.
    """

    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        if arr.ndim != 3:
            raise ImageError(f"expected 2-D or 3-D pixel data, got ndim={arr.ndim}")
        h, w, c = arr.shape
        if h < 1 or w < 1:
            raise DimensionError(f"image dimensions must be >= 1, got {h}x{w}")
        if c not in (1, 3):
            raise ImageError(f"channel count must be 1 or 3, got {c}")
        if not np.all(np.isfinite(arr)):
            raise ImageError("image contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ImageError(
                f"values outside [0, 1]: min={arr.min():.6g} max={arr.max():.6g}"
            )
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def plane(self) -> np.ndarray:
        """The (H, W) view of a single-channel image."""
        if self.channels != 1:
            raise ImageError(f"plane() requires 1 channel, image has {self.channels}")
        return self.data[:, :, 0]


@dataclass(frozen=True)
class PixelFormat:
    """Storage format: bit depth (8 or 16) and channel layout (1 or 3)."""

    depth: int = 16
    channels: int = 1

    def __post_init__(self):
        if self.depth not in (8, 16):
            raise UnsupportedFormatError(f"bit depth must be 8 or 16, got {self.depth}")
        if self.channels not in (1, 3):
            raise UnsupportedFormatError(
                f"channel layout must be 1 or 3, got {self.channels}"
            )

    @property
    def max_code(self) -> int:
        return (1 << self.depth) - 1


def clamp01(arr: np.ndarray) -> np.ndarray:
    """Clamp an array into [0, 1] (final step of clamping operations)."""
    return np.clip(arr, 0.0, 1.0)


def quantize(img: Image, depth: int) -> np.ndarray:
    """Map [0,1] floats to integer codes with round-half-to-even."""
    max_code = (1 << depth) - 1
    codes = np.rint(img.data * max_code)
    dtype = np.uint8 if depth == 8 else np.uint16
    return codes.astype(dtype)


def _read_netpbm(raw: bytes, path: Path) -> tuple[np.ndarray, int]:
    """Decode binary PGM (P5) or PPM (P6). Returns (codes HxWxC, maxval)."""
    fields: list[bytes] = []
    pos = 2
    # Header: magic, width, height, maxval; '#' comments allowed between tokens.
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageReadError(f"truncated netpbm header: {path}")
        fields.append(raw[start:pos])
    pos += 1  # single whitespace byte after maxval
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError as e:
        raise ImageReadError(f"bad netpbm header in {path}: {e}") from e
    if maxval not in (255, 65535):
        raise UnsupportedFormatError(f"netpbm maxval {maxval} unsupported: {path}")
    channels = 1 if raw[:2] == b"P5" else 3
    dtype = np.dtype(">u2") if maxval == 65535 else np.dtype("u1")
    count = width * height * channels
    body = raw[pos : pos + count * dtype.itemsize]
    if len(body) != count * dtype.itemsize:
        raise ImageReadError(f"netpbm payload truncated: {path}")
    codes = np.frombuffer(body, dtype=dtype).reshape(height, width, channels)
    return codes.astype(np.uint16 if maxval == 65535 else np.uint8), maxval


def _write_netpbm(codes: np.ndarray, path: Path) -> None:
    h, w, c = codes.shape
    magic = b"P5" if c == 1 else b"P6"
    maxval = 255 if codes.dtype == np.uint8 else 65535
    header = b"%s\n%d %d\n%d\n" % (magic, w, h, maxval)
    # 16-bit samples are big-endian per the netpbm format.
    body = codes.astype(">u2").tobytes() if maxval == 65535 else codes.tobytes()
    path.write_bytes(header + body)


def load_image(path: str | os.PathLike) -> Image:
    """Load a PNG or binary PGM/PPM file, normalizing codes to [0, 1].

    Intensities are divided by (2^depth - 1); channel count is preserved.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise ImageReadError(f"cannot read {path}: {e}") from e

    if raw[:8] == _PNG_MAGIC:
        arr = cv2.imdecode(np.frombuffer(raw, np.uint8), cv2.IMREAD_UNCHANGED)
        if arr is None:
            raise ImageReadError(f"PNG decode failed: {path}")
        if arr.dtype == np.uint8:
            maxval = 255
        elif arr.dtype == np.uint16:
            maxval = 65535
        else:
            raise UnsupportedFormatError(f"unsupported PNG sample type {arr.dtype}: {path}")
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        elif arr.ndim == 3 and arr.shape[2] == 3:
            arr = arr[:, :, ::-1]  # BGR -> RGB
        else:
            raise UnsupportedFormatError(
                f"unsupported PNG layout with {arr.shape[2]} channels: {path}"
            )
        codes = arr
    elif raw[:2] in (b"P5", b"P6"):
        codes, maxval = _read_netpbm(raw, path)
    else:
        raise UnsupportedFormatError(f"not a PNG or binary PGM/PPM file: {path}")

    return Image(codes.astype(np.float64) / maxval)


def store_image(img: Image, path: str | os.PathLike, fmt: PixelFormat) -> None:
    """Quantize and write an image; container is chosen by file suffix.

    .png accepts 1 or 3 channels; .pgm is single-channel; .ppm tri-channel.
    """
    path = Path(path)
    if img.channels != fmt.channels:
        raise UnsupportedFormatError(
            f"format declares {fmt.channels} channel(s), image has {img.channels}"
        )
    codes = quantize(img, fmt.depth)
    suffix = path.suffix.lower()
    try:
        if suffix == ".png":
            out = codes[:, :, ::-1] if fmt.channels == 3 else codes[:, :, 0]
            ok, buf = cv2.imencode(".png", out, _PNG_PARAMS)
            if not ok:
                raise ImageWriteError(f"PNG encode failed: {path}")
            path.write_bytes(buf.tobytes())
        elif suffix == ".pgm":
            if fmt.channels != 1:
                raise UnsupportedFormatError("PGM holds single-channel images only")
            _write_netpbm(codes, path)
        elif suffix == ".ppm":
            if fmt.channels != 3:
                raise UnsupportedFormatError("PPM holds tri-channel images only")
            _write_netpbm(codes, path)
        else:
            raise UnsupportedFormatError(f"unsupported output container: {path.suffix!r}")
    except OSError as e:
        raise ImageWriteError(f"cannot write {path}: {e}") from e


def modcrop(img: Image, scale: int) -> Image:
    """Crop from the bottom/right so both dimensions divide by scale.

    The top-left pixel is unchanged. Errors if a dimension would reach 0.
    """
    if scale < 1:
        raise DimensionError(f"scale must be >= 1, got {scale}")
    h = (img.height // scale) * scale
    w = (img.width // scale) * scale
    if h == 0 or w == 0:
        raise DimensionError(
            f"modcrop of {img.height}x{img.width} by {scale} would produce an empty image"
        )
    if h == img.height and w == img.width:
        return img
    return Image(img.data[:h, :w])


def shave(img: Image, border: int) -> Image:
    """Remove `border` pixels from all four sides."""
    if border < 0:
        raise DimensionError(f"border must be >= 0, got {border}")
    if border == 0:
        return img
    if img.height <= 2 * border or img.width <= 2 * border:
        raise DimensionError(
            f"cannot shave {border}px from a {img.height}x{img.width} image"
        )
    return Image(img.data[border:-border, border:-border])


def to_luminance(img: Image) -> Image:
    """Reduce to a single channel; identity for 1-channel input.

    Tri-channel input is combined with BT.601 weights (0.299, 0.587, 0.114).
    """
    if img.channels == 1:
        return img
    r = img.data[:, :, 0]
    g = img.data[:, :, 1]
    b = img.data[:, :, 2]
    # Delta form keeps constant images bit-exact (the three weights do not
    # sum to exactly 1.0 in binary floating point).
    wr, wg, _ = LUMA_WEIGHTS
    lum = b + wr * (r - b) + wg * (g - b)
    return Image(clamp01(lum))
