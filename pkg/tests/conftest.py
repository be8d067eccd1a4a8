import numpy as np
import pytest

from fovsim.imagekit import Image, image_from_array


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_image(rng, h, w, c=3) -> Image:
    return image_from_array(rng.random((h, w, c)).astype(np.float32))


def quantized_image(rng, h, w, c=3) -> Image:
    """Image whose samples sit exactly on the 8-bit grid (k/255)."""
    q = rng.integers(0, 256, size=(h, w, c)).astype(np.float32) / 255.0
    return image_from_array(q)
