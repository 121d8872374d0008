import numpy as np
import pytest

from motiongen import fixtures


@pytest.fixture(scope="session")
def desk():
    return fixtures.desk_skeleton()


@pytest.fixture(scope="session")
def whole_body():
    return fixtures.paper_scale_skeleton()


@pytest.fixture()
def rng():
    return np.random.default_rng(7)


def random_quaternions(rng, count):
    q = rng.normal(size=(count, 4))
    return q / np.linalg.norm(q, axis=-1, keepdims=True)
