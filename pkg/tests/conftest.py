import numpy as np
import pytest

from ptychoprior.core.rng import Rng
from ptychoprior.services import simulation_service as sim


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help='run slow trend tests')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def np_rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy_geometry():
    """16x16 object, 8px probe, 4px step: 9 positions"""
    rng = Rng(3)
    phantom = sim.Phantom(sim.RealField(rng.uniform(0.1, 0.9, size=(16, 16))), 'toy')
    probe = sim.make_probe(8, 8, defocus=1.0, edge_px=1)
    pattern = sim.make_raster(16, 8, 4)
    stack = sim.simulate(phantom, probe, pattern, sim.NoiseModel(0.0), rng.split(1))
    return stack, probe, phantom
