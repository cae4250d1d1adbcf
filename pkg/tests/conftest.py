import numpy as np
import pytest

from roadpercept.localization import build_masks
from roadpercept.sim import default_corner_mounts, make_camera


@pytest.fixture(scope="session")
def corner_cams():
    """The four default corner fisheye cameras with their exact poses."""
    return {m.camera_id: make_camera(m) for m in default_corner_mounts()}


@pytest.fixture(scope="session")
def corner_masks(corner_cams):
    """Full-resolution lookup masks for the corner cameras (built once)."""
    return {cid: build_masks(cam.rig) for cid, cam in corner_cams.items()}


@pytest.fixture
def rng():
    return np.random.default_rng(0)
