import numpy as np
import pytest

from treedens import kernels


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=["numpy", "numba"])
def backend(request):
    if request.param == "numba":
        if kernels.numba_impl is None:
            pytest.skip("numba backend disabled")
        return kernels.numba_impl
    return kernels.numpy_impl
