"""Wavenumber coverage of the double-bounce acquisition and resolution bounds."""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from .codebook import SourceConfig, TxCodebook, illuminated_set
from .config import get_config
from .geometry import SceneGeometry, snapshot_pose
from .plane import PlaneDesign, focusing_phases as plane_focusing_phases

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class WavenumberCoverage:
    samples: np.ndarray
    extent_x: float
    extent_y: float
    provenance: Dict[str, Any] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.samples)

    def to_record(self) -> Dict[str, Any]:
        dx, dy = resolution_bounds(self)
        return {
            'samples': self.size,
            'extent_x_rad_per_m': float(self.extent_x),
            'extent_y_rad_per_m': float(self.extent_y),
            'resolution_x_m': float(dx),
            'resolution_y_m': float(dy),
            'occupancy': float(occupancy(self)),
            **self.provenance,
        }


def _as_points(atoms) -> np.ndarray:
    atoms = np.asarray(atoms, dtype=float)
    if atoms.ndim == 1:
        return np.column_stack([atoms, np.zeros(atoms.size)])
    return atoms.reshape(-1, 2)


def pair_wavevector(atom_n: Sequence[float], atom_m: Sequence[float], r: Sequence[float],
                    frequency) -> np.ndarray:
    """(2 pi f / c)(u_n + u_m), u pointing from each atom toward r"""
    r = np.asarray(r, dtype=float)
    u_n = r - np.asarray(atom_n, dtype=float)
    u_m = r - np.asarray(atom_m, dtype=float)
    norm_n = np.linalg.norm(u_n, axis=-1, keepdims=True)
    norm_m = np.linalg.norm(u_m, axis=-1, keepdims=True)
    if np.any(norm_n == 0) or np.any(norm_m == 0):
        raise ValueError("Target coincides with an atom")
    direction = u_n / norm_n + u_m / norm_m
    wavenumber = 2 * np.pi * np.asarray(frequency, dtype=float) / SPEED_OF_LIGHT
    return wavenumber[..., None] * direction if np.ndim(wavenumber) else wavenumber * direction


def _unique_pairs(element_sets: Sequence) -> np.ndarray:
    """Distinct unordered atom pairs within each set, as (P, 2, 2) coordinates"""
    pairs = []
    for atoms in element_sets:
        points = _as_points(atoms)
        if len(points) == 0:
            raise ValueError("Element sets must be non-empty")
        points = np.unique(points, axis=0)
        first, second = np.triu_indices(len(points))
        pairs.append(np.stack([points[first], points[second]], axis=1))
    stacked = np.concatenate(pairs)
    return np.unique(stacked.reshape(len(stacked), 4), axis=0).reshape(-1, 2, 2)


def coverage(r: Sequence[float], element_sets: Sequence, bandwidth: float, carrier: float,
             frequency_samples: Optional[int] = None, k_bin: Optional[float] = None,
             source: Optional[Sequence[float]] = None) -> WavenumberCoverage:
    """Union over element sets of the pair wavevectors across the band"""
    settings = get_config().tomography
    frequency_samples = frequency_samples or settings.frequency_samples
    k_bin = k_bin or settings.k_bin_rad_per_m
    pairs = _unique_pairs(element_sets)
    if frequency_samples > 1:
        frequencies = np.linspace(carrier - bandwidth / 2, carrier + bandwidth / 2, frequency_samples)
    else:
        frequencies = np.array([carrier])

    r = np.asarray(r, dtype=float)
    u_n = r - pairs[:, 0, :]
    u_m = r - pairs[:, 1, :]
    direction = (u_n / np.linalg.norm(u_n, axis=1, keepdims=True)
                 + u_m / np.linalg.norm(u_m, axis=1, keepdims=True))
    wavenumbers = 2 * np.pi * frequencies / SPEED_OF_LIGHT
    raw = (wavenumbers[:, None, None] * direction[None, :, :]).reshape(-1, 2)

    extent_x = float(raw[:, 0].max() - raw[:, 0].min())
    extent_y = float(raw[:, 1].max() - raw[:, 1].min())
    keys = np.floor(raw / k_bin).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    samples = raw[np.sort(first)]

    provenance = {
        'sets': len(element_sets),
        'pairs': int(len(pairs)),
        'bandwidth_hz': float(bandwidth),
        'target_m': [float(v) for v in r],
    }
    if source is not None:
        provenance['source_m'] = [float(v) for v in source]
    return WavenumberCoverage(samples=samples, extent_x=extent_x, extent_y=extent_y,
                              provenance=provenance)


def resolution_bounds(cov: WavenumberCoverage) -> Tuple[float, float]:
    """(2 pi / dk_x, 2 pi / dk_y); a zero extent gives an unbounded resolution"""
    bounds = []
    for axis, extent in (('x', cov.extent_x), ('y', cov.extent_y)):
        if extent <= 0:
            logger.warning(f"Coverage has no extent along {axis}: resolution is unbounded")
            bounds.append(float('inf'))
        else:
            bounds.append(float(2 * np.pi / extent))
    return bounds[0], bounds[1]


def focusing_phases(source: Sequence[float], target: Sequence[float], atoms,
                    wavelength: float) -> np.ndarray:
    """Lens phases for atoms on the plane (abscissae or points)"""
    return plane_focusing_phases(source, target, _as_points(atoms)[:, 0], wavelength)


def residual_phase_spread(source: Sequence[float], target: Sequence[float], atoms,
                          phases: np.ndarray, wavelength: float) -> float:
    """Peak-to-peak of the round-trip phase left after the plane phases, unwrapped over atoms"""
    x = _as_points(atoms)[:, 0]
    k0 = 2 * np.pi / wavelength
    path = np.hypot(x - source[0], source[1]) + np.hypot(target[0] - x, target[1])
    residual = np.unwrap(np.mod(2 * k0 * path - 2 * np.asarray(phases), 2 * np.pi))
    return float(np.ptp(residual))


def footprint_sets(scene: SceneGeometry, cfg: SourceConfig, plane: PlaneDesign,
                   codebook: TxCodebook, sweeps: int = 1,
                   offsets: Optional[Sequence[float]] = None,
                   mode: str = "auto") -> List[np.ndarray]:
    """Illuminated atoms per snapshot as ROI-frame points"""
    offsets = np.zeros(sweeps) if offsets is None else np.asarray(offsets, dtype=float)
    sets = []
    for ell in range(sweeps * codebook.size):
        theta = codebook.angles[ell % codebook.size]
        pose = snapshot_pose(scene, ell, offset=offsets[ell // codebook.size])
        lit = illuminated_set(cfg, scene, plane, theta, ell, pose, mode)
        x = plane.positions[lit.indices] - pose.shift_x
        sets.append(np.column_stack([x, np.full(x.size, -pose.shift_y)]))
    return sets


def specular_subset(plane: PlaneDesign, atoms: np.ndarray, theta_i: float,
                    target: Sequence[float], tolerance: Optional[float] = None) -> np.ndarray:
    """Atoms (ROI-frame points) whose local reflection points at the target"""
    points = _as_points(atoms)
    if len(points) == 0:
        return points
    bearing = np.arctan((target[0] - points[:, 0]) / (target[1] - points[:, 1]))
    local = plane.local_reflection_angle(theta_i, points[:, 0])
    if tolerance is None:
        tolerance = plane.wavelength / (2 * len(points) * plane.atom_pitch * np.cos(np.mean(local)))
    return points[np.abs(local - bearing) <= tolerance]


def occupancy(cov: WavenumberCoverage, bins: Optional[int] = None) -> float:
    """Fraction of bounding-box cells holding at least one sample"""
    bins = bins or get_config().tomography.occupancy_bins
    if cov.size == 0:
        return 0.0
    samples = cov.samples
    lo = samples.min(axis=0)
    span = np.maximum(samples.max(axis=0) - lo, 1e-12)
    cells = np.minimum(np.floor((samples - lo) / span * bins), bins - 1).astype(int)
    occupied = {tuple(cell) for cell in cells}
    x_bins = bins if cov.extent_x > 0 else 1
    y_bins = bins if cov.extent_y > 0 else 1
    return len(occupied) / (x_bins * y_bins)


def coverage_csv_rows(cov: WavenumberCoverage) -> List[Tuple[float, float]]:
    return [(float(kx), float(ky)) for kx, ky in cov.samples]
