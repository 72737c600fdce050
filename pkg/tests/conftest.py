import numpy as np
import pytest

from emberforge import fixtures


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def quad_asset():
    return fixtures.quad_asset()


@pytest.fixture(scope="session")
def sphere_asset():
    return fixtures.sphere_asset()


@pytest.fixture(scope="session")
def led_panel_asset():
    return fixtures.led_panel_asset()


@pytest.fixture(scope="session")
def multi_object_asset():
    return fixtures.multi_object_asset()
