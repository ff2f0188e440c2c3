import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(0xC0FFEE)


def gaussian_int8_bytes(rng, n, sigma=20.0) -> bytes:
    """Quantized-Gaussian test corpus: int8 bytes with bell-shaped histogram."""
    vals = rng.normal(0.0, sigma, n)
    return np.clip(np.round(vals), -127, 127).astype(np.int8).tobytes()
