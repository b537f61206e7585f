"""Scene geometry: frames, distances, incidence/reflection angles.

Conventions: the plane lies on y=0, source and ROI are in y>0, angles are
measured from the plane normal and are positive toward +x. Points handed to
these functions are ROI-frame positions, i.e. positions at snapshot 0; the
ROI translates rigidly with the source.
"""

from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Tuple

import numpy as np

from .exceptions import GeometryError

Point = Tuple[float, float]


@dataclass(frozen=True)
class SceneGeometry:
    source_height: float
    source_x0: float
    speed: float
    pri: float
    roi_center: Point
    roi_extent: Point
    plane_origin: Point = (0.0, 0.0)

    def __post_init__(self):
        values = [self.source_height, self.source_x0, self.speed, self.pri,
                  *self.roi_center, *self.roi_extent, *self.plane_origin]
        if not np.all(np.isfinite(values)):
            raise GeometryError("Scene geometry contains non-finite values")
        if self.source_height <= 0:
            raise GeometryError(f"Source height must be positive, got {self.source_height}")
        if self.pri <= 0:
            raise GeometryError(f"PRI must be positive, got {self.pri}")
        if self.roi_center[1] <= 0:
            raise GeometryError("ROI must lie in front of the plane (roi_center y > 0)")
        if self.roi_extent[0] < 0 or self.roi_extent[1] < 0:
            raise GeometryError("ROI extent must be non-negative")
        if self.roi_center[1] - self.roi_extent[1] / 2 <= 0:
            raise GeometryError("ROI crosses the reflection plane")
        if self.plane_origin[1] != 0.0:
            raise GeometryError("The reflection plane must lie on y=0")

    @property
    def step(self) -> float:
        """Source travel per snapshot"""
        return self.speed * self.pri

    @property
    def is_degenerate(self) -> bool:
        return self.roi_extent[0] == 0 and self.roi_extent[1] == 0


@dataclass(frozen=True)
class Target:
    position: Point
    rcs: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite([*self.position, self.rcs, self.phase])):
            raise GeometryError("Target contains non-finite values")
        if self.rcs < 0:
            raise GeometryError(f"Target RCS must be >= 0, got {self.rcs}")


@dataclass(frozen=True)
class TargetSet:
    targets: Tuple[Target, ...] = field(default_factory=tuple)

    def __iter__(self):
        return iter(self.targets)

    def __len__(self) -> int:
        return len(self.targets)

    def validate(self, scene: SceneGeometry, tol: float = 1e-9) -> None:
        """Check that every target lies inside the ROI rectangle"""
        cx, cy = scene.roi_center
        hx, hy = scene.roi_extent[0] / 2, scene.roi_extent[1] / 2
        for index, target in enumerate(self.targets):
            x, y = target.position
            if abs(x - cx) > hx + tol or abs(y - cy) > hy + tol:
                raise GeometryError(f"Target {index} at {target.position} lies outside the ROI")


@dataclass(frozen=True)
class SnapshotPose:
    """True source position and ROI translation at one snapshot"""
    source_x: float
    source_y: float
    shift_x: float
    shift_y: float

    def place(self, r) -> np.ndarray:
        """Absolute position of ROI-frame point(s) r"""
        r = np.asarray(r, dtype=float)
        return r + np.array([self.shift_x, self.shift_y])


def _check_angle(theta_i) -> np.ndarray:
    theta = np.asarray(theta_i, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise GeometryError("Angle is not finite")
    if np.any(np.abs(theta) >= np.pi / 2):
        raise GeometryError("Incidence angle must satisfy |theta| < pi/2")
    return theta


def _check_point(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(r)):
        raise GeometryError("Point is not finite")
    return r


def snapshot_pose(scene: SceneGeometry, ell: int, height_error: float = 0.0,
                  tilt: float = 0.0, offset: float = 0.0) -> SnapshotPose:
    """Pose at snapshot ell for an optional height error, trajectory tilt and start offset"""
    travel = ell * scene.step
    along = travel * np.cos(tilt)
    down = travel * np.sin(tilt)
    return SnapshotPose(
        source_x=scene.source_x0 + offset + along,
        source_y=scene.source_height + height_error - down,
        shift_x=offset + along,
        shift_y=height_error - down,
    )


def intercept_point(theta_i, scene: SceneGeometry, ell: int = 0,
                    pose: Optional[SnapshotPose] = None) -> Tuple[float, float]:
    """Beam-centre intercept of the Tx beam with the plane"""
    theta = _check_angle(theta_i)
    pose = pose or snapshot_pose(scene, ell)
    return pose.source_x + pose.source_y * np.tan(theta), 0.0


def reflection_angle_to_target(theta_i, scene: SceneGeometry, r, ell: int = 0,
                               pose: Optional[SnapshotPose] = None):
    """Reflection angle that sends the beam-centre ray to target r"""
    theta = _check_angle(theta_i)
    r = _check_point(r)
    pose = pose or snapshot_pose(scene, ell)
    absolute = pose.place(r)
    x, y = absolute[..., 0], absolute[..., 1]
    if np.any(y <= 0):
        raise GeometryError("Target must lie in front of the plane")
    p0 = pose.source_x + pose.source_y * np.tan(theta)
    return np.arctan((x - p0) / y)


def path_lengths(theta_i, scene: SceneGeometry, x, ell: int = 0,
                 pose: Optional[SnapshotPose] = None):
    """Beam-centre distances source->plane (D_i) and plane->x (D_o)"""
    theta = _check_angle(theta_i)
    x = _check_point(x)
    pose = pose or snapshot_pose(scene, ell)
    absolute = pose.place(x)
    if np.any(absolute[..., 1] <= 0):
        raise GeometryError("Point must lie in front of the plane")
    p0 = pose.source_x + pose.source_y * np.tan(theta)
    d_i = pose.source_y / np.cos(theta)
    d_o = np.hypot(absolute[..., 0] - p0, absolute[..., 1])
    return d_i, d_o


def two_leg_phase(theta_i, scene: SceneGeometry, r, wavelength: float, ell: int = 0):
    d_i, d_o = path_lengths(theta_i, scene, r, ell)
    return 4 * np.pi / wavelength * (d_i + d_o)


def propagation_phase_derivative(theta_i, scene: SceneGeometry, r, wavelength: float,
                                 ell: int = 0, pose: Optional[SnapshotPose] = None):
    """Derivative of the two-leg propagation phase w.r.t. the Tx angle"""
    theta = _check_angle(theta_i)
    pose = pose or snapshot_pose(scene, ell)
    theta_o = reflection_angle_to_target(theta, scene, r, pose=pose)
    scale = 4 * np.pi * pose.source_y / (wavelength * np.cos(theta) ** 2)
    return scale * (np.sin(theta) - np.sin(theta_o))


def bearing(theta_i, scene: SceneGeometry, r, ell: int = 0,
            pose: Optional[SnapshotPose] = None) -> np.ndarray:
    """Unit vector from the beam intercept toward r (range direction)"""
    theta_o = reflection_angle_to_target(theta_i, scene, r, ell, pose)
    return np.stack([np.sin(theta_o), np.cos(theta_o)], axis=-1)


def roi_corners(scene: SceneGeometry) -> np.ndarray:
    cx, cy = scene.roi_center
    hx, hy = scene.roi_extent[0] / 2, scene.roi_extent[1] / 2
    return np.array([[cx - hx, cy - hy], [cx + hx, cy - hy],
                     [cx - hx, cy + hy], [cx + hx, cy + hy]])


def roi_signed_corners(scene: SceneGeometry) -> Tuple[np.ndarray, np.ndarray]:
    """Corner points r+ = r* + (dx/2, dy/2) and r- = r* - (dx/2, dy/2)"""
    center = np.asarray(scene.roi_center, dtype=float)
    half = np.asarray(scene.roi_extent, dtype=float) / 2
    return center + half, center - half


def roi_delay_bounds(theta_i: float, scene: SceneGeometry, pose: SnapshotPose,
                     extra_points: Iterable[Point] = ()) -> Tuple[float, float]:
    """Min and max of D_i + D_o over the ROI rectangle (plus optional points)"""
    theta = float(_check_angle(theta_i))
    p0 = pose.source_x + pose.source_y * np.tan(theta)
    d_i = pose.source_y / np.cos(theta)

    corners = pose.place(roi_corners(scene))
    x_lo, y_lo = corners[:, 0].min(), corners[:, 1].min()
    x_hi = corners[:, 0].max()
    nearest = np.array([np.clip(p0, x_lo, x_hi), y_lo])

    points: List[np.ndarray] = [corners, nearest[None, :]]
    extra = [pose.place(p) for p in extra_points]
    if extra:
        points.append(np.vstack(extra))
    allp = np.vstack(points)
    d_o = np.hypot(allp[:, 0] - p0, allp[:, 1])
    return d_i + float(d_o.min()), d_i + float(d_o.max())
