"""Tx codebook and illumination footprint."""

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Dict, Optional, Sequence

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from .exceptions import GeometryError, IlluminationError, ScenarioError
from .geometry import (SceneGeometry, SnapshotPose, roi_corners, roi_signed_corners,
                       propagation_phase_derivative, snapshot_pose)

if TYPE_CHECKING:
    from .plane import PlaneDesign

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SourceConfig:
    carrier: float
    bandwidth: float
    aperture: float
    pulse_duration: float
    tx_power: float = 1.0

    def __post_init__(self):
        if not np.all(np.isfinite([self.carrier, self.bandwidth, self.aperture,
                                   self.pulse_duration, self.tx_power])):
            raise ScenarioError("Source configuration contains non-finite values")
        if self.carrier <= 0:
            raise ScenarioError("Carrier frequency must be positive")
        if self.bandwidth <= 0:
            raise ScenarioError("Bandwidth must be positive")
        if self.bandwidth >= self.carrier:
            raise ScenarioError("Bandwidth must be smaller than the carrier frequency")
        if self.aperture <= 0:
            raise ScenarioError("Source aperture must be positive")
        if self.pulse_duration <= 0:
            raise ScenarioError("Pulse duration must be positive")
        if self.tx_power < 0:
            raise ScenarioError("Tx power must be non-negative")

    @classmethod
    def from_beamwidth(cls, carrier: float, bandwidth: float, beamwidth: float,
                       pulse_duration: float, tx_power: float = 1.0) -> 'SourceConfig':
        """Build a source whose broadside beamwidth is `beamwidth` radians"""
        wavelength = SPEED_OF_LIGHT / carrier
        return cls(carrier, bandwidth, wavelength / beamwidth, pulse_duration, tx_power)

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier

    @property
    def wavenumber(self) -> float:
        return 2 * np.pi / self.wavelength

    def check_against(self, scene: SceneGeometry) -> None:
        if self.pulse_duration > scene.pri:
            raise ScenarioError(
                f"Pulse duration {self.pulse_duration:.3e} s exceeds the PRI {scene.pri:.3e} s")


@dataclass(frozen=True, eq=False)
class TxCodebook:
    center: float
    span: float
    step: float
    angles: np.ndarray
    limit: float
    compliant: bool
    corner_mode: str = "all"

    @property
    def size(self) -> int:
        return len(self.angles)

    def observation_time(self, pri: float) -> float:
        return self.size * pri

    def to_record(self) -> Dict[str, Any]:
        return {
            'center_deg': float(np.degrees(self.center)),
            'span_deg': float(np.degrees(self.span)),
            'step_deg': float(np.degrees(self.step)),
            'limit_deg': float(np.degrees(self.limit)),
            'size': self.size,
            'compliant': bool(self.compliant),
            'corner_mode': self.corner_mode,
            'angles_deg': [float(a) for a in np.degrees(self.angles)],
        }


@dataclass(frozen=True, eq=False)
class Illumination:
    indices: np.ndarray
    center: float
    count: int


def source_beamwidth(cfg: SourceConfig, theta_i) -> np.ndarray:
    """Tx beamwidth at steering angle theta_i"""
    theta = np.asarray(theta_i, dtype=float)
    if not np.all(np.isfinite(theta)) or np.any(np.abs(theta) >= np.pi / 2):
        raise GeometryError("Beamwidth requires |theta_i| < pi/2")
    return cfg.wavelength / (cfg.aperture * np.cos(theta))


def footprint_length(cfg: SourceConfig, scene: SceneGeometry, theta_i: float,
                     source_y: Optional[float] = None) -> float:
    """Length of the plane cut by the -3 dB beam cone"""
    height = scene.source_height if source_y is None else source_y
    half = float(source_beamwidth(cfg, theta_i)) / 2
    lo, hi = theta_i - half, theta_i + half
    if abs(lo) >= np.pi / 2 or abs(hi) >= np.pi / 2:
        return float('inf')
    return float(height * (np.tan(hi) - np.tan(lo)))


def footprint_count(cfg: SourceConfig, scene: SceneGeometry, theta_i: float, pitch: float,
                    mode: str = "auto", source_y: Optional[float] = None) -> int:
    """Number of illuminated atoms M_l"""
    height = scene.source_height if source_y is None else source_y
    broadside = cfg.wavelength / cfg.aperture
    sin_cos = abs(np.cos(theta_i) * np.sin(theta_i))
    closed = height * broadside / (pitch * sin_cos) if sin_cos > 0 else float('inf')
    cone = footprint_length(cfg, scene, theta_i, height) / pitch

    if mode == "closed_form":
        if not np.isfinite(closed):
            raise GeometryError("Footprint formula is singular at broadside")
        value = closed
    elif mode == "cone":
        value = cone
    elif mode == "auto":
        value = min(closed, cone)
    else:
        raise ValueError(f"Unknown footprint mode: {mode}")

    if not np.isfinite(value):
        raise IlluminationError(f"Footprint diverges at theta_i={np.degrees(theta_i):.2f} deg")
    return max(1, int(round(value)))


def illuminated_set(cfg: SourceConfig, scene: SceneGeometry, plane: 'PlaneDesign',
                    theta_i: float, ell: int = 0, pose: Optional[SnapshotPose] = None,
                    mode: str = "auto") -> Illumination:
    """Plane atoms inside the footprint of snapshot ell (local plane indices)"""
    pose = pose or snapshot_pose(scene, ell)
    p0 = pose.source_x + pose.source_y * np.tan(theta_i)
    count = footprint_count(cfg, scene, theta_i, plane.atom_pitch, mode, pose.source_y)

    center = (p0 - plane.origin_x) / plane.atom_pitch - plane.first_index
    start = int(np.floor(center - (count - 1) / 2 + 0.5))
    indices = np.arange(max(start, 0), min(start + count, plane.atom_count))
    if indices.size == 0:
        raise IlluminationError(
            f"Footprint at x={p0:.3f} m (snapshot {ell}) misses the plane")
    return Illumination(indices=indices, center=float(center), count=count)


def effective_aperture(scene: SceneGeometry, center: float, span: float) -> float:
    """Plane extent swept by the beam centre over one sweep"""
    lo, hi = center - span / 2, center + span / 2
    if abs(lo) >= np.pi / 2 or abs(hi) >= np.pi / 2:
        raise GeometryError("Angular span must stay within (-pi/2, pi/2)")
    return float(scene.source_height * (np.tan(hi) - np.tan(lo)))


def _sampling_points(scene: SceneGeometry, corner_mode: str, dense: int):
    if dense > 1:
        cx, cy = scene.roi_center
        hx, hy = scene.roi_extent[0] / 2, scene.roi_extent[1] / 2
        gx, gy = np.meshgrid(np.linspace(cx - hx, cx + hx, dense),
                             np.linspace(cy - hy, cy + hy, dense))
        grid = np.column_stack([gx.ravel(), gy.ravel()])
        return grid, grid
    if corner_mode == "all":
        corners = roi_corners(scene)
        return corners, corners
    if corner_mode == "diagonal":
        r_plus, r_minus = roi_signed_corners(scene)
        return r_plus[None, :], r_minus[None, :]
    raise ValueError(f"Unknown corner mode: {corner_mode}")


def angular_sampling_limit(scene: SceneGeometry, cfg: SourceConfig, center: float,
                           span: float, corner_mode: str = "all", dense: int = 0) -> float:
    """Largest Tx angular step that keeps the ROI free of grating lobes"""
    upper_points, lower_points = _sampling_points(scene, corner_mode, dense)
    upper = propagation_phase_derivative(center + span / 2, scene, upper_points, cfg.wavelength)
    lower = propagation_phase_derivative(center - span / 2, scene, lower_points, cfg.wavelength)
    spread = abs(float(np.max(upper)) - float(np.min(lower)))
    if spread <= 1e-12:
        logger.warning("Phase-derivative spread vanishes: angular sampling is unbounded")
        return float('inf')
    return float(np.pi / spread)


def build_codebook(scene: SceneGeometry, cfg: SourceConfig, center: float, span: float,
                   override_step: Optional[float] = None, allow_aliasing: bool = False,
                   corner_mode: str = "all") -> TxCodebook:
    """Uniform Tx angle grid over the span"""
    if span < 0:
        raise ScenarioError("Angular span must be non-negative")
    limit = angular_sampling_limit(scene, cfg, center, span, corner_mode)

    if override_step is not None:
        if override_step <= 0:
            raise ScenarioError("Codebook step must be positive")
        step = override_step if allow_aliasing else min(override_step, limit)
    else:
        step = limit

    if span == 0 or not np.isfinite(step) or step > span:
        if span > 0:
            logger.warning(f"Span {np.degrees(span):.4f} deg is smaller than one step; "
                           "using a single-angle codebook")
        angles = np.array([center])
        step = step if np.isfinite(step) else 0.0
    else:
        count = int(np.floor(span / step + 1e-9)) + 1
        angles = center - span / 2 + step * np.arange(count)

    compliant = bool(step <= limit * (1 + 1e-9))
    if not compliant:
        logger.warning(f"Codebook step {np.degrees(step):.4f} deg exceeds the sampling "
                       f"limit {np.degrees(limit):.4f} deg (aliasing study)")
    logger.info(f"Tx codebook: {len(angles)} angles, step {np.degrees(step):.4f} deg")
    return TxCodebook(center=center, span=span, step=step, angles=angles, limit=limit,
                      compliant=compliant, corner_mode=corner_mode)


def narrowband_margin(bandwidth: float, footprint: float, theta_i: float,
                      theta_o: float) -> float:
    """Ratio of 1/B to the delay spread across the illuminated aperture"""
    spread = footprint / SPEED_OF_LIGHT * max(abs(np.sin(theta_i)), abs(np.sin(theta_o)))
    if bandwidth <= 0 or spread <= 0:
        return float('inf')
    return float((1.0 / bandwidth) / spread)


@dataclass(frozen=True, eq=False)
class NarrowbandReport:
    passed: bool
    margins: np.ndarray
    factor: float


def narrowband_check(cfg: SourceConfig, scene: SceneGeometry, plane: 'PlaneDesign',
                     codebook: TxCodebook, reflection_angles: Sequence[float],
                     factor: float = 10.0, mode: str = "auto") -> NarrowbandReport:
    """Per-snapshot narrowband margins for one sweep"""
    reflection_angles = np.broadcast_to(np.asarray(reflection_angles, dtype=float),
                                        (codebook.size,))
    margins = np.empty(codebook.size)
    for ell, (theta_i, theta_o) in enumerate(zip(codebook.angles, reflection_angles)):
        lit = illuminated_set(cfg, scene, plane, theta_i, ell, mode=mode)
        margins[ell] = narrowband_margin(cfg.bandwidth, lit.indices.size * plane.atom_pitch,
                                         theta_i, theta_o)
    passed = bool(np.all(margins >= factor))
    if not passed:
        worst = int(np.argmin(margins))
        logger.warning(f"Narrowband condition violated: margin {margins[worst]:.2f} "
                       f"< {factor} at snapshot {worst}")
    return NarrowbandReport(passed=passed, margins=margins, factor=factor)
