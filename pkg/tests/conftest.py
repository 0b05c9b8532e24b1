import numpy as np
import pytest

from shiftscope.predictor import predict, train_logistic
from shiftscope.synth import binary_base


@pytest.fixture(scope="session")
def small_base():
    """2000-row, 3-feature labeled base shared by cheap sample-mode tests."""
    return binary_base(3, 2000, 1234)


@pytest.fixture(scope="session")
def small_model(small_base):
    return train_logistic(small_base)


@pytest.fixture(scope="session")
def small_scored(small_base, small_model):
    return predict(small_model, small_base)


def make_rng(seed=0):
    return np.random.default_rng(seed)
