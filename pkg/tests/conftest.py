import numpy as np
import pytest

from ramec.scenario import Scenario


@pytest.fixture
def scenario():
    return Scenario()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
