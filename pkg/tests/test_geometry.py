import numpy as np
import pytest

from src.exceptions import GeometryError
from src.geometry import (SceneGeometry, Target, TargetSet, bearing, intercept_point, path_lengths,
                          propagation_phase_derivative, reflection_angle_to_target,
                          roi_delay_bounds, snapshot_pose, two_leg_phase)

WAVELENGTH = 299792458.0 / 77e9


def test_snapshot_pose_nominal(scene):
    """Test the source travels v*PRI per snapshot and the ROI follows it"""
    start = snapshot_pose(scene, 0)
    assert start.source_x == 0.0
    assert start.source_y == 5.0

    later = snapshot_pose(scene, 10)
    assert later.source_x == pytest.approx(0.01)
    assert later.shift_x == pytest.approx(0.01)
    assert later.shift_y == 0.0


def test_snapshot_pose_height_error(scene):
    """Test a height error raises the source and the ROI together"""
    pose = snapshot_pose(scene, 0, height_error=0.039)
    assert pose.source_y == pytest.approx(5.039)
    assert pose.shift_y == pytest.approx(0.039)


def test_snapshot_pose_tilt(scene):
    """Test a 2 deg tilt drops the source by travel*sin(beta)"""
    pose = snapshot_pose(scene, 60, tilt=np.radians(2.0))
    assert pose.source_y == pytest.approx(5.0 - 0.06 * np.sin(np.radians(2.0)), abs=1e-12)
    assert 5.0 - pose.source_y == pytest.approx(2.094e-3, abs=1e-6)


def test_intercept_and_specular_reflection(scene):
    """Test the beam intercept and a specular target at 45 deg"""
    theta = np.radians(45.0)
    x, y = intercept_point(theta, scene)
    assert x == pytest.approx(5.0)
    assert y == 0.0
    assert reflection_angle_to_target(theta, scene, (10.0, 5.0)) == pytest.approx(theta)

    d_i, d_o = path_lengths(theta, scene, (10.0, 5.0))
    assert d_i == pytest.approx(5.0 * np.sqrt(2))
    assert d_o == pytest.approx(5.0 * np.sqrt(2))


def test_reflection_angle_constant_while_roi_comoves(scene):
    """Test the ROI-frame reflection angle does not drift with the snapshot index"""
    theta = np.radians(40.0)
    first = reflection_angle_to_target(theta, scene, scene.roi_center, ell=0)
    later = reflection_angle_to_target(theta, scene, scene.roi_center, ell=100)
    assert later == pytest.approx(first, abs=1e-12)


def test_phase_derivative_matches_finite_difference(scene):
    """Test the closed-form phase derivative against a central difference"""
    theta, h = 0.7, 1e-6
    exact = propagation_phase_derivative(theta, scene, scene.roi_center, WAVELENGTH)
    numeric = (two_leg_phase(theta + h, scene, scene.roi_center, WAVELENGTH)
               - two_leg_phase(theta - h, scene, scene.roi_center, WAVELENGTH)) / (2 * h)
    assert exact == pytest.approx(numeric, rel=1e-5)


def test_phase_derivative_vanishes_at_specular_point(scene):
    """Test the derivative is zero when the target sits on the specular ray"""
    value = propagation_phase_derivative(np.radians(45.0), scene, (10.0, 5.0), WAVELENGTH)
    assert value == pytest.approx(0.0, abs=1e-6)


def test_vectorized_points(scene):
    """Test geometry functions accept arrays of points"""
    points = np.array([[13.3, 10.5], [14.3, 11.5], [13.8, 11.0]])
    angles = reflection_angle_to_target(np.radians(40.0), scene, points)
    assert angles.shape == (3,)
    directions = bearing(np.radians(40.0), scene, points)
    assert np.allclose(np.linalg.norm(directions, axis=1), 1.0)


def test_delay_bounds_contain_roi_centre(scene):
    """Test the ROI delay bounds bracket the centre path"""
    theta = np.radians(40.0)
    pose = snapshot_pose(scene, 5)
    near, far = roi_delay_bounds(theta, scene, pose)
    d_i, d_o = path_lengths(theta, scene, scene.roi_center, pose=pose)
    assert near < d_i + d_o < far


def test_invalid_angles_rejected(scene):
    """Test |theta| >= pi/2 and non-finite angles raise GeometryError"""
    with pytest.raises(GeometryError):
        intercept_point(np.pi / 2, scene)
    with pytest.raises(GeometryError):
        path_lengths(-np.pi / 2, scene, scene.roi_center)
    with pytest.raises(GeometryError):
        reflection_angle_to_target(np.nan, scene, scene.roi_center)


def test_points_behind_plane_rejected(scene):
    """Test targets on or behind the plane raise GeometryError"""
    with pytest.raises(GeometryError):
        reflection_angle_to_target(np.radians(40.0), scene, (1.0, -1.0))
    with pytest.raises(GeometryError):
        path_lengths(np.radians(40.0), scene, (1.0, 0.0))


def test_scene_validation():
    """Test invalid scenes are rejected"""
    with pytest.raises(GeometryError):
        SceneGeometry(5.0, 0.0, 20.0, 50e-6, (13.8, 0.4), (1.0, 1.0))
    with pytest.raises(GeometryError):
        SceneGeometry(-1.0, 0.0, 20.0, 50e-6, (13.8, 11.0), (1.0, 1.0))
    with pytest.raises(GeometryError):
        SceneGeometry(5.0, 0.0, 20.0, 0.0, (13.8, 11.0), (1.0, 1.0))
    with pytest.raises(GeometryError):
        SceneGeometry(5.0, np.inf, 20.0, 50e-6, (13.8, 11.0), (1.0, 1.0))


def test_targets_validated_against_roi(scene):
    """Test a target outside the ROI is rejected"""
    TargetSet((Target((13.8, 11.0)), Target((14.3, 11.5)))).validate(scene)
    with pytest.raises(GeometryError):
        TargetSet((Target((15.0, 11.0)),)).validate(scene)
    with pytest.raises(GeometryError):
        Target((13.8, 11.0), rcs=-1.0)
