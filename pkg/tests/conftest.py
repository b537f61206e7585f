import numpy as np
import pytest

from src.codebook import SourceConfig, build_codebook
from src.geometry import SceneGeometry, Target, TargetSet
from src.plane import build_plane


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-size imaging runs (deselect with -m \"not slow\")")


@pytest.fixture(scope="module")
def scene():
    """Reference geometry: source 5 m above the plane, 1 x 1 m ROI at (13.8, 11)"""
    return SceneGeometry(source_height=5.0, source_x0=0.0, speed=20.0, pri=50e-6,
                         roi_center=(13.8, 11.0), roi_extent=(1.0, 1.0))


@pytest.fixture(scope="module")
def source():
    """77 GHz, 500 MHz, 0.5 deg broadside beam"""
    return SourceConfig.from_beamwidth(77e9, 500e6, np.radians(0.5), 1e-6)


@pytest.fixture(scope="module")
def codebook(scene, source):
    return build_codebook(scene, source, np.radians(40.0), np.radians(5.0))


@pytest.fixture(scope="module")
def plane(scene, source, codebook):
    return build_plane(scene, source, codebook, period=2.0, n_angles=13)


@pytest.fixture(scope="module")
def lens_plane(scene, source, codebook):
    return build_plane(scene, source, codebook, period=2.0, n_angles=13, mode="lens")


@pytest.fixture(scope="module")
def targets():
    return TargetSet((Target((13.8, 11.0)),))
