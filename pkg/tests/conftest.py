import numpy as np
import pytest

from bayestab.experiments import default_truth


@pytest.fixture(scope="session")
def truth():
    return default_truth()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
