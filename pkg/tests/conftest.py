import numpy as np
import pytest

from filippov_contraction.registry import build


@pytest.fixture
def ex1():
    return build("ex1")


@pytest.fixture
def ex2():
    return build("ex2")


@pytest.fixture
def ex3():
    return build("ex3")


@pytest.fixture
def ex4():
    return build("ex4")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
