import os
import tempfile

# the package logger opens its file handler at import time
os.environ.setdefault("INFOAUCTION_LOG_DIR", tempfile.mkdtemp(prefix="infoauction-tests-"))

import numpy as np
import pytest

from infoauction.types.cost import CostModel, CostVariant
from infoauction.types.grid import TypeGrid, ValueGrid
from infoauction.types.mechanism import MechanismConfig


def make_config(
    r=(0.0, 0.5, 1.0),
    s=(0.0, 0.5, 1.0),
    n=2,
    a=1.0,
    b=2.0,
    m=4,
    scale=1.0,
    gamma=2.0,
    variant=CostVariant.ANCHOR_AT_S,
    **kwargs,
) -> MechanismConfig:
    """Environment with uniform type weights and a power kernel."""
    grid = ValueGrid(a=a, b=b, m=m)
    return MechanismConfig(
        n=n,
        value_grid=grid,
        type_grid=TypeGrid.build(r, s),
        cost_model=CostModel(grid=grid, gamma=gamma, scale=scale, variant=variant),
        **kwargs,
    )


@pytest.fixture
def desk() -> MechanismConfig:
    """Two bidders on {1, 1.25, ..., 2}, r and s on {0, .5, 1}, k(x) = x^2 anchored at z_s."""
    return make_config()


@pytest.fixture
def zero_cost() -> MechanismConfig:
    return make_config(scale=0.0)


@pytest.fixture
def prohibitive() -> MechanismConfig:
    """Learning is so expensive that every type keeps its prior mean."""
    return make_config(r=(0.5, 1.0), scale=1e3)


@pytest.fixture
def single_type() -> MechanismConfig:
    return make_config(r=(1.0,), s=(1.0,))


@pytest.fixture
def desk_map() -> np.ndarray:
    """Symmetric equilibrium map of the desk instance, shape (R, S, m + 1)."""
    shared = np.zeros((3, 3, 5))
    shared[:, 0, 0] = 1.0
    shared[:, 2, 4] = 1.0
    shared[0, 1] = [0.5, 0.0, 0.0, 0.0, 0.5]
    shared[1:, 1, 2] = 1.0
    return shared


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240607)
