import pytest

from heatkernel.geometry import SumSpec
from heatkernel.oracle import build_grid


@pytest.fixture(scope="session")
def r1r2():
    return SumSpec.from_alphas((1.0, 2.0))


@pytest.fixture(scope="session")
def grid_r1r2(r1r2):
    return build_grid(r1r2, 2000.0, 3000, 1.002, t_max=1e5)


@pytest.fixture(scope="session")
def tiny_grid():
    return build_grid(SumSpec.from_alphas((1.0, 1.5, 2.0)), 10.0, 5, 1.0, allow_coarse=True)
