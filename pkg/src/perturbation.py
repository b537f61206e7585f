"""Geometry non-idealities: height error, trajectory tilt and random illumination offset."""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from .codebook import SourceConfig, TxCodebook
from .exceptions import ScenarioError
from .geometry import (SceneGeometry, SnapshotPose, TargetSet, path_lengths,
                       reflection_angle_to_target, snapshot_pose)
from .imaging import ImageGrid, backproject_sweeps, combine_sweeps, image_metrics
from .plane import PlaneDesign
from .signal import path_loss, synthesize_sweep

logger = logging.getLogger(__name__)

MAX_TILT = np.radians(10.0)


@dataclass(frozen=True)
class PerturbationSpec:
    epsilon: float = 0.0
    beta: float = 0.0
    gamma: Optional[float] = 0.0  # None draws one value per sweep
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.epsilon) or not np.isfinite(self.beta):
            raise ScenarioError("Perturbation values must be finite")
        if abs(self.beta) >= MAX_TILT:
            raise ScenarioError("Trajectory tilt must stay below 10 deg")

    @property
    def is_identity(self) -> bool:
        return self.epsilon == 0.0 and self.beta == 0.0 and self.gamma == 0.0

    def sweep_gammas(self, sweeps: int) -> np.ndarray:
        if self.gamma is None:
            return draw_gammas(self.seed, sweeps)
        return np.full(sweeps, float(self.gamma))


def draw_gammas(seed: int, count: int) -> np.ndarray:
    """Uniform spatial phases in [0, 2pi)"""
    return np.random.default_rng(seed).uniform(0.0, 2 * np.pi, count)


def gamma_offsets(gammas: Sequence[float], period: float) -> np.ndarray:
    """Start offsets that realise the spatial phases gamma against a fixed pattern"""
    return np.mod(np.asarray(gammas, dtype=float), 2 * np.pi) * period / (2 * np.pi)


def perturbed_geometry(scene: SceneGeometry, spec: PerturbationSpec, ell: int,
                       offset: float = 0.0) -> SnapshotPose:
    """True pose at snapshot ell; the imager keeps assuming the nominal one"""
    return snapshot_pose(scene, ell, height_error=spec.epsilon, tilt=spec.beta, offset=offset)


def taylor_distance_factors(scene: SceneGeometry, theta_i: float, x: Sequence[float],
                            ell: int = 0, which: str = "epsilon") -> Tuple[float, float]:
    """dD_i/dp and dD_o/dp at p=0 for p = epsilon or beta, from the exact perturbed geometry"""
    pose = snapshot_pose(scene, ell)
    p0 = pose.source_x + pose.source_y * np.tan(theta_i)
    rx, ry = pose.place(x)
    d_o = np.hypot(rx - p0, ry)
    tan = np.tan(theta_i)

    if which == "epsilon":
        d_i_rate = 1 / np.cos(theta_i)
        d_o_rate = (-(rx - p0) * tan + ry) / d_o
    elif which == "beta":
        travel = ell * scene.step
        d_i_rate = -travel / np.cos(theta_i)
        d_o_rate = travel * ((rx - p0) * tan - ry) / d_o
    else:
        raise ValueError(f"Unknown perturbation: {which}")
    return float(d_i_rate), float(d_o_rate)


def published_taylor_factors(scene: SceneGeometry, theta_i: float, x: Sequence[float],
                         ell: int = 0, which: str = "epsilon") -> Tuple[float, float]:
    """Published closed-form factors, evaluated with x relative to the start abscissa"""
    height = scene.source_height
    tan = np.tan(theta_i)
    travel = ell * scene.step
    rx, ry = x[0] - scene.source_x0, x[1]
    _, d_o = path_lengths(theta_i, scene, x, ell)

    if which == "epsilon":
        return float(1 / np.cos(theta_i)), float((-tan * (rx - height * tan) + (height - ry)) / d_o)
    if which == "beta":
        zeta_i = (height * tan + travel) * np.sqrt(1 + tan ** 2)
        zeta_o = d_o * tan - ((rx - height * tan) * (rx + travel) * tan
                              + (height - ry) * (ry * tan + travel)) / d_o
        return float(zeta_i), float(zeta_o)
    raise ValueError(f"Unknown perturbation: {which}")


def _magnitude(spec: PerturbationSpec, which: str) -> float:
    return spec.epsilon if which == "epsilon" else spec.beta


def distance_error_profile(scene: SceneGeometry, codebook: TxCodebook, spec: PerturbationSpec,
                           x: Sequence[float], which: str = "epsilon") -> Dict[str, Any]:
    """First-order distance error per Tx angle and its deviation from a linear trend"""
    value = _magnitude(spec, which)
    errors = np.empty(codebook.size)
    published = np.empty(codebook.size)
    exact = np.empty(codebook.size)
    for ell, theta in enumerate(codebook.angles):
        d_i, d_o = taylor_distance_factors(scene, theta, x, ell, which)
        p_i, p_o = published_taylor_factors(scene, theta, x, ell, which)
        errors[ell] = (d_i + d_o) * value
        published[ell] = (p_i + p_o) * value
        true_i, true_o = path_lengths(theta, scene, x, pose=perturbed_geometry(scene, spec, ell))
        nominal_i, nominal_o = path_lengths(theta, scene, x, ell)
        exact[ell] = float(true_i + true_o - nominal_i - nominal_o)

    if codebook.size > 1:
        coeffs = np.polyfit(codebook.angles, errors, 1)
        residual = errors - np.polyval(coeffs, codebook.angles)
        fitted = np.polyval(coeffs, codebook.angles)
        span = float(fitted.max() - fitted.min())
    else:
        residual = np.zeros(1)
        span = 0.0
    deviation = float(np.max(np.abs(residual)))
    discrepancy = float(np.max(np.abs(errors - published)))
    if discrepancy > 0:
        logger.debug(f"Published first-order factors differ by up to {discrepancy:.3e} m")
    return {
        'theta_i_deg': np.degrees(codebook.angles),
        'errors_m': errors,
        'published_errors_m': published,
        'exact_errors_m': exact,
        'linear_deviation_m': deviation,
        'linear_span_m': span,
        'relative_deviation': deviation / span if span > 0 else 0.0,
    }


def distance_factor_table(scene: SceneGeometry, codebook: TxCodebook,
                          x: Sequence[float]) -> List[Dict[str, float]]:
    """Per-snapshot height (xi) and tilt (zeta) factors, exact and published"""
    rows = []
    for ell, theta in enumerate(codebook.angles):
        xi = taylor_distance_factors(scene, theta, x, ell, "epsilon")
        zeta = taylor_distance_factors(scene, theta, x, ell, "beta")
        xi_published = published_taylor_factors(scene, theta, x, ell, "epsilon")
        zeta_published = published_taylor_factors(scene, theta, x, ell, "beta")
        rows.append({
            'ell': ell,
            'theta_i_deg': float(np.degrees(theta)),
            'xi_i': xi[0],
            'xi_o': xi[1],
            'zeta_i_m': zeta[0],
            'zeta_o_m': zeta[1],
            'published_xi_i': xi_published[0],
            'published_xi_o': xi_published[1],
            'published_zeta_i_m': zeta_published[0],
            'published_zeta_o_m': zeta_published[1],
        })
    return rows


def first_order_validity(error: float, bandwidth: float, fraction: float = 0.1) -> bool:
    """False (with a warning) once a distance error exceeds a fraction of the range cell"""
    cell = SPEED_OF_LIGHT / (2 * bandwidth)
    if abs(error) > fraction * cell:
        logger.warning(f"Distance error {error * 1e3:.1f} mm exceeds {fraction:.0%} of the "
                       f"range cell ({cell * 1e3:.0f} mm); first-order prediction is approximate")
        return False
    return True


def predicted_degraded_image(scene: SceneGeometry, cfg: SourceConfig, codebook: TxCodebook,
                             spec: PerturbationSpec, target: Sequence[float],
                             which: str = "epsilon", rcs: float = 1.0) -> np.ndarray:
    """Per-snapshot first-order contributions to the image value at the target"""
    value = _magnitude(spec, which)
    weights = np.empty(codebook.size, dtype=np.complex128)
    worst = 0.0
    for ell, theta in enumerate(codebook.angles):
        f_i, f_o = taylor_distance_factors(scene, theta, target, ell, which)
        delta = (f_i + f_o) * value
        worst = max(worst, abs(delta))
        d_i, d_o = path_lengths(theta, scene, target, ell)
        theta_o = float(reflection_angle_to_target(theta, scene, target, ell))
        eta = path_loss(cfg, theta, theta_o, float(d_i), float(d_o), rcs)
        weights[ell] = (eta * np.sinc(cfg.bandwidth * 2 * delta / SPEED_OF_LIGHT)
                        * np.exp(-1j * 4 * np.pi / cfg.wavelength * delta))
    first_order_validity(worst, cfg.bandwidth)
    return weights


def random_illumination_study(scene: SceneGeometry, cfg: SourceConfig, plane: PlaneDesign,
                              codebook: TxCodebook, targets: TargetSet, gammas: Sequence[float],
                              grid: ImageGrid, threads: Optional[int] = None,
                              region: Optional[Tuple[float, float]] = None) -> Dict[str, Any]:
    """One image per spatial phase gamma, their dispersion and the coherent combination"""
    gammas = np.asarray(gammas, dtype=float)
    offsets = gamma_offsets(gammas, plane.period)
    cube = synthesize_sweep(scene, cfg, plane, codebook, targets, sweeps=len(gammas),
                            offsets=offsets, threads=threads)
    images: List[ImageGrid] = backproject_sweeps(cube, scene, plane, cfg, grid, threads=threads)
    metrics = [image_metrics(image, region) for image in images]
    combined = combine_sweeps(images)
    combined_metrics = image_metrics(combined, region)

    peaks = np.array([m.peak_value for m in metrics])
    islrs = np.array([m.islr for m in metrics])
    logger.info(f"Random illumination: {len(gammas)} draws, ISLR spread "
                f"{np.ptp(islrs):.3f}, combined ISLR {combined_metrics.islr:.3f}")
    return {
        'gammas': gammas,
        'images': images,
        'metrics': metrics,
        'peak_spread': float(np.ptp(peaks)),
        'islr_spread': float(np.ptp(islrs)),
        'combined': combined,
        'combined_metrics': combined_metrics,
    }
