"""Back-projection image formation and point-spread metrics."""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT
from scipy.ndimage import label, maximum_filter

from .codebook import SourceConfig
from .config import get_config
from .exceptions import MetricError, NumericError, ScenarioError
from .geometry import SceneGeometry, snapshot_pose
from .plane import PlaneDesign
from .signal import EchoCube, sample_fast_time

logger = logging.getLogger(__name__)

HALF_POWER = 1 / np.sqrt(2)


@dataclass(frozen=True, eq=False)
class ImageGrid:
    """Complex image on an edge-inclusive ROI-frame grid; values are indexed [y, x]"""
    x: np.ndarray
    y: np.ndarray
    values: np.ndarray
    provenance: Dict[str, Any] = field(default_factory=dict)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    @property
    def pitch(self) -> Tuple[float, float]:
        px = float(self.x[1] - self.x[0]) if self.x.size > 1 else 0.0
        py = float(self.y[1] - self.y[0]) if self.y.size > 1 else 0.0
        return px, py

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    def pixels(self) -> np.ndarray:
        """Pixel centres as an (N, 2) array in row-major order"""
        gx, gy = np.meshgrid(self.x, self.y)
        return np.column_stack([gx.ravel(), gy.ravel()])

    def to_header(self) -> Dict[str, Any]:
        return {
            'nx': int(self.x.size),
            'ny': int(self.y.size),
            'x0_m': float(self.x[0]),
            'y0_m': float(self.y[0]),
            'pitch_m': list(self.pitch),
            'provenance': self.provenance,
        }

    @classmethod
    def from_header(cls, header: Dict[str, Any], values: np.ndarray) -> 'ImageGrid':
        nx, ny = header['nx'], header['ny']
        px, py = header['pitch_m']
        return cls(x=header['x0_m'] + px * np.arange(nx), y=header['y0_m'] + py * np.arange(ny),
                   values=np.asarray(values, dtype=np.complex128).reshape(ny, nx),
                   provenance=header.get('provenance', {}))


@dataclass(frozen=True)
class ImageMetrics:
    peak_position: Tuple[float, float]
    peak_value: float
    widths: Tuple[float, float]
    islr: float
    highest_sidelobe_db: float
    mainlobe_region: Tuple[float, float]

    def to_record(self) -> Dict[str, Any]:
        return {
            'peak_position_m': [float(v) for v in self.peak_position],
            'peak_value': float(self.peak_value),
            'width_x_m': float(self.widths[0]),
            'width_y_m': float(self.widths[1]),
            'islr': float(self.islr),
            'islr_db': float(10 * np.log10(self.islr)) if self.islr > 0 else float('-inf'),
            'highest_sidelobe_db': float(self.highest_sidelobe_db),
            'mainlobe_region_m': [float(v) for v in self.mainlobe_region],
        }


def grid_from_spec(scene: SceneGeometry, pitch: float, center: Optional[Sequence[float]] = None,
                   extent: Optional[Sequence[float]] = None) -> ImageGrid:
    """Zero image on an edge-inclusive grid, defaulting to the ROI rectangle"""
    if pitch <= 0:
        raise ScenarioError("Pixel pitch must be positive")
    cx, cy = center if center is not None else scene.roi_center
    ex, ey = extent if extent is not None else scene.roi_extent
    nx = int(round(ex / pitch)) + 1
    ny = int(round(ey / pitch)) + 1
    x = cx - ex / 2 + pitch * np.arange(nx)
    y = cy - ey / 2 + pitch * np.arange(ny)
    return ImageGrid(x=x, y=y, values=np.zeros((ny, nx), dtype=np.complex128))


def _snapshot_terms(cube: EchoCube, assumed: SceneGeometry, plane: PlaneDesign,
                    snapshots: Sequence[int]):
    """Assumed beam-centre geometry per snapshot: (p0, D_i, shift, plane compensation)"""
    terms = []
    size = cube.sweep_length
    for ell in snapshots:
        theta = cube.theta_i[ell]
        pose = snapshot_pose(assumed, ell, offset=cube.sweep_offsets[ell // size])
        p0 = pose.source_x + pose.source_y * np.tan(theta)
        d_i = pose.source_y / np.cos(theta)
        compensation = np.exp(-2j * plane.phase_at(p0))
        terms.append((ell, p0, d_i, np.array([pose.shift_x, pose.shift_y]), compensation))
    return terms


def backproject(cube: EchoCube, assumed: SceneGeometry, plane: PlaneDesign, cfg: SourceConfig,
                grid: ImageGrid, snapshots: Optional[Sequence[int]] = None,
                threads: Optional[int] = None, interpolation: Optional[str] = None,
                taps: Optional[int] = None) -> ImageGrid:
    """Delay-and-phase compensated coherent sum over snapshots for every pixel.

    The assumed geometry may differ from the one used to synthesize the cube;
    sweep offsets recorded in the cube are known to the imager.
    """
    config = get_config()
    kind = interpolation or config.simulation.interpolation
    taps = taps or config.simulation.sinc_taps
    chunk = config.performance.pixel_chunk
    workers = threads or config.performance.max_threads
    snapshots = list(range(cube.snapshots)) if snapshots is None else list(snapshots)
    terms = _snapshot_terms(cube, assumed, plane, snapshots)
    k0 = cfg.wavenumber
    waveform = cube.waveform
    pixels = grid.pixels()

    def run(start: int):
        block = pixels[start:start + chunk]
        acc = np.zeros(len(block), dtype=np.complex128)
        missed = 0
        for ell, p0, d_i, shift, compensation in terms:
            points = block + shift
            total = d_i + np.hypot(points[:, 0] - p0, points[:, 1])
            position = waveform.sample_position(2 * total / SPEED_OF_LIGHT)
            values, inside = sample_fast_time(cube.data[ell], position, taps, kind)
            acc += values * np.exp(2j * k0 * total) * compensation
            missed += int(np.count_nonzero(~inside))
        return acc, missed

    start_time = time.time()
    with ThreadPoolExecutor(max_workers=workers) as executor:
        results = list(executor.map(run, range(0, len(pixels), chunk)))

    values = np.concatenate([acc for acc, _ in results]) if results else np.zeros(0, complex)
    missed = sum(m for _, m in results)
    if missed:
        logger.info(f"{missed} pixel delays fell outside the fast-time window")
    if not np.all(np.isfinite(values)):
        raise NumericError("Back-projection produced non-finite pixels")

    logger.info(f"Back-projected {len(snapshots)} snapshots onto {len(pixels)} pixels "
                f"in {(time.time() - start_time) * 1000:.1f}ms")
    provenance = dict(grid.provenance)
    provenance.update({'plane_mode': plane.mode, 'snapshots': len(snapshots),
                       'sweeps': int(cube.sweeps), 'missed_delays': int(missed)})
    return replace(grid, values=values.reshape(grid.shape), provenance=provenance)


def backproject_sweeps(cube: EchoCube, assumed: SceneGeometry, plane: PlaneDesign,
                       cfg: SourceConfig, grid: ImageGrid, **kwargs) -> List[ImageGrid]:
    """One image per sweep"""
    images = []
    for sweep in range(cube.sweeps):
        window = cube.sweep_slice(sweep)
        image = backproject(cube, assumed, plane, cfg, grid,
                            snapshots=range(window.start, window.stop), **kwargs)
        images.append(replace(image, provenance={**image.provenance, 'sweep': sweep}))
    return images


def combine_sweeps(images: Sequence[ImageGrid]) -> ImageGrid:
    """Coherent pixel-wise sum of images on identical grids"""
    if not images:
        raise ScenarioError("Nothing to combine")
    first = images[0]
    total = np.zeros_like(first.values)
    for image in images:
        if not (np.array_equal(image.x, first.x) and np.array_equal(image.y, first.y)):
            raise ScenarioError("Cannot combine images on different grids")
        total = total + image.values
    return replace(first, values=total,
                   provenance={**first.provenance, 'combined': len(images)})


def _peak_index(image: ImageGrid) -> Tuple[int, int]:
    magnitude = image.magnitude
    if not np.any(magnitude > 0):
        raise MetricError("Image is identically zero")
    iy, ix = np.unravel_index(int(np.argmax(magnitude)), magnitude.shape)
    return int(iy), int(ix)


def _half_power_width(profile: np.ndarray, index: int, coords: np.ndarray) -> float:
    if index == 0 or index == profile.size - 1:
        raise MetricError("Peak lies on the grid boundary")
    threshold = profile[index] * HALF_POWER

    left = index
    while left > 0 and profile[left - 1] >= threshold:
        left -= 1
    if left == 0:
        raise MetricError("Mainlobe does not fall below -3 dB inside the grid")
    right = index
    while right < profile.size - 1 and profile[right + 1] >= threshold:
        right += 1
    if right == profile.size - 1:
        raise MetricError("Mainlobe does not fall below -3 dB inside the grid")

    def crossing(outer: int, inner: int) -> float:
        frac = (threshold - profile[outer]) / (profile[inner] - profile[outer])
        return coords[outer] + frac * (coords[inner] - coords[outer])

    return float(crossing(right + 1, right) - crossing(left - 1, left))


def measure_mainlobe(image: ImageGrid,
                     peak: Optional[Tuple[int, int]] = None) -> Tuple[float, float]:
    """-3 dB widths along x and y through the peak pixel (iy, ix)"""
    iy, ix = peak if peak is not None else _peak_index(image)
    magnitude = image.magnitude
    return (_half_power_width(magnitude[iy, :], ix, image.x),
            _half_power_width(magnitude[:, ix], iy, image.y))


def _mainlobe_mask(image: ImageGrid, center: Tuple[float, float],
                   region: Tuple[float, float]) -> np.ndarray:
    gx, gy = np.meshgrid(image.x, image.y)
    return (np.abs(gx - center[0]) <= region[0] / 2) & (np.abs(gy - center[1]) <= region[1] / 2)


def islr(image: ImageGrid, region: Tuple[float, float],
         center: Optional[Tuple[float, float]] = None) -> float:
    """Energy outside the mainlobe rectangle over energy inside it"""
    if center is None:
        iy, ix = _peak_index(image)
        center = (image.x[ix], image.y[iy])
    energy = image.magnitude ** 2
    inside = _mainlobe_mask(image, center, region)
    main = float(energy[inside].sum())
    if main <= 0:
        raise MetricError("Mainlobe region holds no energy")
    return float(energy[~inside].sum()) / main


def _local_maxima(image: ImageGrid, size: int) -> np.ndarray:
    magnitude = image.magnitude
    return (magnitude == maximum_filter(magnitude, size=size, mode='nearest')) & (magnitude > 0)


def secondary_lobes(image: ImageGrid, threshold_db: float, region: Tuple[float, float],
                    size: int = 3) -> List[Dict[str, float]]:
    """Local maxima outside the mainlobe rectangle above threshold_db relative to the peak"""
    iy, ix = _peak_index(image)
    magnitude = image.magnitude
    peak = magnitude[iy, ix]
    outside = ~_mainlobe_mask(image, (image.x[ix], image.y[iy]), region)
    rows, cols = np.nonzero(_local_maxima(image, size) & outside)
    lobes = []
    for r, c in zip(rows, cols):
        level = 20 * np.log10(magnitude[r, c] / peak)
        if level >= threshold_db:
            lobes.append({'x': float(image.x[c]), 'y': float(image.y[r]), 'level_db': float(level)})
    return sorted(lobes, key=lambda lobe: -lobe['level_db'])


def highest_sidelobe(image: ImageGrid, region: Tuple[float, float], size: int = 3) -> float:
    lobes = secondary_lobes(image, -np.inf, region, size)
    return lobes[0]['level_db'] if lobes else float('-inf')


def image_metrics(image: ImageGrid, region: Optional[Tuple[float, float]] = None,
                  scale: Optional[float] = None, size: Optional[int] = None) -> ImageMetrics:
    """Peak, -3 dB widths, ISLR and highest sidelobe; region overrides the scaled widths"""
    settings = get_config().imaging
    scale = scale or settings.islr_mainlobe_scale
    size = size or settings.local_max_size
    iy, ix = _peak_index(image)
    widths = measure_mainlobe(image, (iy, ix))
    region = tuple(region) if region is not None else (scale * widths[0], scale * widths[1])
    center = (float(image.x[ix]), float(image.y[iy]))
    return ImageMetrics(
        peak_position=refine_peak(image, (iy, ix)),
        peak_value=float(image.magnitude[iy, ix]),
        widths=widths,
        islr=islr(image, region, center),
        highest_sidelobe_db=highest_sidelobe(image, region, size),
        mainlobe_region=region,
    )


def refine_peak(image: ImageGrid, peak: Optional[Tuple[int, int]] = None) -> Tuple[float, float]:
    """Sub-pixel peak position from a three-point parabola along each axis"""
    iy, ix = peak if peak is not None else _peak_index(image)
    magnitude = image.magnitude

    def vertex(profile: np.ndarray, index: int, coords: np.ndarray) -> float:
        if index == 0 or index == profile.size - 1:
            return float(coords[index])
        a, b, c = profile[index - 1], profile[index], profile[index + 1]
        curvature = a - 2 * b + c
        if curvature >= 0:
            return float(coords[index])
        return float(coords[index] + 0.5 * (a - c) / curvature * (coords[1] - coords[0]))

    return vertex(magnitude[iy, :], ix, image.x), vertex(magnitude[:, ix], iy, image.y)


def mainlobe_centroid(image: ImageGrid) -> Tuple[float, float]:
    """Power-weighted centroid of the connected -3 dB region around the peak"""
    iy, ix = _peak_index(image)
    magnitude = image.magnitude
    labels, _ = label(magnitude >= magnitude[iy, ix] * HALF_POWER)
    blob = labels == labels[iy, ix]
    weights = magnitude[blob] ** 2
    gx, gy = np.meshgrid(image.x, image.y)
    return (float(np.sum(gx[blob] * weights) / weights.sum()),
            float(np.sum(gy[blob] * weights) / weights.sum()))


def peak_shift(image: ImageGrid, truth: Sequence[float],
               direction: Sequence[float]) -> Dict[str, float]:
    """Mainlobe displacement from truth, split along a unit range direction and its normal"""
    px, py = mainlobe_centroid(image)
    dx, dy = px - truth[0], py - truth[1]
    ux, uy = direction
    return {
        'dx': float(dx),
        'dy': float(dy),
        'range': float(dx * ux + dy * uy),
        'cross_range': float(dx * uy - dy * ux),
    }
