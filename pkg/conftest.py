"""
Shared pytest fixtures and the `slow` marker.
"""
import numpy as np
import pytest

from gp import PrimitiveSet, ptc2


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run slow experiment tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running experiment test")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def make_random_trees(count, n_features=3, max_depth=7, max_size=128, seed=0):
    rng = np.random.default_rng(seed)
    primitives = PrimitiveSet(n_features)
    return [ptc2(rng, max_depth, max_size, primitives) for _ in range(count)]


@pytest.fixture
def random_trees():
    return make_random_trees
