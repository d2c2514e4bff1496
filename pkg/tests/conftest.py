import numpy as np
import pytest

from nishimc.prior import bernoulli, rademacher


@pytest.fixture(scope="session")
def rad():
    return rademacher()


@pytest.fixture(scope="session")
def bern():
    return bernoulli(0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)
