import numpy as np
import pytest

from fedalign import backend


@pytest.fixture(params=backend.available())
def each_backend(request):
    """Run a test once per installed kernel backend."""
    backend.use(request.param)
    yield request.param
    backend.use("auto")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
