import pytest

from randecoc import kernels
from randecoc.codec import sample_matrix


@pytest.fixture
def sample4():
    return sample_matrix()


@pytest.fixture(params=kernels.available_backends())
def backend(request, monkeypatch):
    """Run a test once per available kernel backend."""
    monkeypatch.setattr(kernels, "BACKEND", request.param)
    return request.param
