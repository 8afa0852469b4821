import numpy as np
import pytest

from cylsfm.geometry import CylindricalCamera
from cylsfm.panorama import DepthMap, Panorama


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_cam():
    return CylindricalCamera(64, 16)


@pytest.fixture
def random_pano(rng):
    return Panorama(rng.random((16, 64, 3)))


@pytest.fixture
def random_depth(rng):
    return DepthMap(rng.uniform(1.0, 10.0, (16, 64)))
