import numpy as np
import pytest

from darksqueeze import kernels
from darksqueeze.model import benchmark_params


@pytest.fixture
def bench():
    return benchmark_params()


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_hermitian(rng, n, scale=1.0):
    m = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * 0.5 * (m + m.conj().T)
