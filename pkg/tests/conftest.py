import warnings

import numpy as np
import pytest

warnings.filterwarnings("ignore", message=".*TBB.*")


def pytest_configure(config):
    config.addinivalue_line("filterwarnings", "ignore::UserWarning:numba")
    config.addinivalue_line("filterwarnings", "ignore:.*TBB.*")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
