import sys
import warnings
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pvartarch.calendar import HolidayCalendar  # noqa: E402
from pvartarch.config import EstimatorConfig, LagSpec  # noqa: E402
from pvartarch.estimator import fit  # noqa: E402
from pvartarch.synthetic import TrueModel, simulate  # noqa: E402


@pytest.fixture(scope="session")
def holidays():
    return HolidayCalendar.german(range(2008, 2017))


@pytest.fixture(scope="session")
def demo_sim():
    return simulate(TrueModel.demo(), 12000, seed=11)


@pytest.fixture(scope="session")
def compact_config():
    return EstimatorConfig(lags=LagSpec.compact())


@pytest.fixture(scope="session")
def demo_fit(demo_sim, holidays, compact_config):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fit(demo_sim.panel, holidays, compact_config)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
