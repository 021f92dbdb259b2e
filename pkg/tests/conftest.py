"""Shared fixtures: small models and simulated data sets."""
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.models.lotka_volterra import LotkaVolterraModel
from src.models.ou import OuModel
from src.models.simulate import simulate_dataset

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def ou_model():
    """Linear-Gaussian OU model with a point-mass start."""
    return OuModel()


@pytest.fixture
def ou_data(ou_model):
    """Eleven OU observations at the default parameters."""
    return simulate_dataset(ou_model, n_obs=11, seed=7)


@pytest.fixture
def lv_model():
    return LotkaVolterraModel()


@pytest.fixture
def lv_data(lv_model):
    return simulate_dataset(lv_model, n_obs=5, seed=3)


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
