import numpy as np
import pytest

from elapsed.grid import Grid
from elapsed.rates import ExpDensity, SoftSigmoid

collect_ignore = ["examples", "runs"]


@pytest.fixture
def soft():
    return SoftSigmoid(1.0, 2.0, 1.0, 1.0)


@pytest.fixture
def grid40():
    return Grid(40.0, 800)


@pytest.fixture
def grid20():
    return Grid(20.0, 400)


@pytest.fixture
def exp_kernel():
    return ExpDensity(tau=0.5, delta=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
