import numpy as np
import pytest

from skewlab.config import CascadeConfig
from skewlab.orbits import cascade
from skewlab.skew import SkewSystem


@pytest.fixture(scope="session")
def default_sys():
    return SkewSystem.default()


@pytest.fixture(scope="session")
def cells():
    """Depth-1 base cylinders times 12 fiber arcs: 72 neighbourhoods."""
    return CascadeConfig(base_depth=1, arcs=12).neighborhoods()


@pytest.fixture(scope="session")
def full_cascade(default_sys, cells):
    return cascade(default_sys, cells, 8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
