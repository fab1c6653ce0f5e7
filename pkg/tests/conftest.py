import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cswarm.domain import Grid
from cswarm.kernels import KernelSpec

settings.register_profile(
    "default",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def grid16():
    return Grid(dim=2, cells=16)


@pytest.fixture(scope="session")
def grid32():
    return Grid(dim=2, cells=32)


@pytest.fixture(scope="session")
def grid64():
    return Grid(dim=2, cells=64)


@pytest.fixture(scope="session")
def line64():
    return Grid(dim=1, cells=64)


@pytest.fixture(scope="session")
def kernel():
    """Default interaction kernel used across the suite."""
    return KernelSpec(kind="repulsive_exp", length_scale=1.0)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
