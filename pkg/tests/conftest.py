import warnings

import numpy as np
import pytest

from collapse_sim.noise import PeriodicityWarning
from collapse_sim.physics import CODATA_2018

M0 = CODATA_2018.m0
HBAR = CODATA_2018.hbar


def pytest_configure(config):
    warnings.filterwarnings("ignore", category=PeriodicityWarning)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)
