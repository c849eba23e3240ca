import pytest

from src.core.grid import GridSpec, uniform_density
from src.core.kernel import new_kernel
from src.core.profiles import steady_state_spectral


@pytest.fixture(scope="session")
def square():
    """Q(z) = z^2"""
    return new_kernel([0.0, 1.0])


@pytest.fixture(scope="session")
def identity():
    """Q(z) = z"""
    return new_kernel([1.0])


@pytest.fixture(scope="session")
def grid():
    return GridSpec()


@pytest.fixture(scope="session")
def small_grid():
    return GridSpec(h=1.0 / 32.0, y_max=32.0)


@pytest.fixture(scope="session")
def star1(square, grid):
    return steady_state_spectral(square, 1.0, grid)


@pytest.fixture
def uniform(grid):
    return uniform_density(grid)
