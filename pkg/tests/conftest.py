import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sovrating import dataset

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def linear_data():
    return dataset.synthesize_dataset(600, 11, "linear")


@pytest.fixture(scope="session")
def nonlinear_data():
    return dataset.synthesize_dataset(600, 12, "nonlinear")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
