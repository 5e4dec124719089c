import numpy as np
import pytest
from hypothesis import settings

from mkdvlab.grid import Grid

settings.register_profile("numeric", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("numeric")


@pytest.fixture(scope="session")
def grid():
    return Grid(40.0, 2048)


@pytest.fixture(scope="session")
def coarse():
    return Grid(40.0, 1024)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
