import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from chflow.grid import Grid
from chflow.params import Coefficient, ModelParams
from chflow.potential import PotentialParams

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def base_params():
    """Reference physics: theta=1, theta_c=2, rho+=1, rho-=0.5, unit coefficients."""
    return ModelParams(1.0, 0.5, PotentialParams(1.0, 2.0))


@pytest.fixture
def varied_params():
    """Phase-dependent coefficients, to exercise every coefficient path."""
    return ModelParams(
        1.0, 3.0, PotentialParams(0.7, 1.0),
        mobility=Coefficient(1.0, 0.2), viscosity=Coefficient(1.0, 0.3),
        bulk_viscosity=Coefficient(0.5, 0.0, 0.2), transition_mobility=Coefficient(0.5, 0.1, 0.2),
        gamma=2.0,
    )


def interface_field(grid: Grid, kind="bubble", amp=0.8, width=0.15):
    x, y = grid.cell_centers()
    if kind == "bubble":
        return amp * np.tanh((0.3 - np.hypot(x - 0.5 * grid.lx, y - 0.5 * grid.ly)) / width)
    return amp * np.tanh((y - 0.4 * grid.ly) / width)
