import pytest
from hypothesis import settings

from cableland.dynamics import DroneParams

# numba kernels compile on first call; wall-clock deadlines would flake on that
settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


@pytest.fixture(scope="session")
def drone():
    return DroneParams.default()
