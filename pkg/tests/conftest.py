import numpy as np
import pytest

from structmia.imagecore import gen_shapes_dataset
from structmia.schedule import linear_schedule


@pytest.fixture(scope="session")
def schedule():
    return linear_schedule()


@pytest.fixture(scope="session")
def small_dataset():
    return gen_shapes_dataset(8, 8, 32, 3, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
