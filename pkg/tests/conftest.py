import sys
from pathlib import Path

import numpy as np
import pytest

from spectradec.imgio import LUMA, RGB, PlanarImage

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_image(rng, height, width, channels=1, quantized=False):
    """Random [0,1] image; quantized restricts samples to k/255 so 8-bit
    round trips are exact."""
    if quantized:
        data = rng.integers(0, 256, size=(channels, height, width)) / 255.0
    else:
        data = rng.random((channels, height, width))
    return PlanarImage(data, RGB if channels == 3 else LUMA)


@pytest.fixture
def make_image(rng):
    def _make(height, width, channels=1, quantized=False):
        return random_image(rng, height, width, channels, quantized)
    return _make
