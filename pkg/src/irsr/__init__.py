"""Dual-branch super-resolution inference and evaluation harness."""

__version__ = "0.1.0"

from .errors import IrsrError  # noqa: F401
from .image import Image, PixelFormat  # noqa: F401
