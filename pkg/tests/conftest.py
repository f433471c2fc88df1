import sys
from pathlib import Path

import numpy as np
import pytest

from irsr.image import Image

TESTS_DIR = Path(__file__).parent
LOOPBACK = TESTS_DIR / "loopback_adapter.py"


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)


def random_image(rng, h, w, c=1, f32_lattice=False):
    """Random image; f32_lattice restricts values to exact float32s so
    wire round-trips can be compared bitwise."""
    data = rng.random((h, w, c))
    if f32_lattice:
        data = data.astype(np.float32).astype(np.float64)
    return Image(data)


def loopback_cmd(*args):
    return [sys.executable, str(LOOPBACK), *map(str, args)]
