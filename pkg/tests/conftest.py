import numpy as np
import pytest

from emergelab import world


@pytest.fixture(scope="session")
def tiny_dataset():
    """Small but complete dataset shared across tests (6 images per class)."""
    return world.build_dataset(6, 16, 16, seed=0)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
