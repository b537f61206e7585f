"""Echo synthesis: matched-filter pulse, double-bounce scattering, path loss and noise."""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from .codebook import SourceConfig, TxCodebook, illuminated_set, narrowband_margin
from .config import get_config
from .exceptions import NumericError
from .geometry import SceneGeometry, TargetSet, roi_delay_bounds, snapshot_pose
from .plane import PlaneDesign

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Waveform:
    """Matched-filter output pulse and the shared fast-time axis"""
    bandwidth: float
    sample_rate: float
    t_min: float
    n_samples: int

    @property
    def times(self) -> np.ndarray:
        return self.t_min + np.arange(self.n_samples) / self.sample_rate

    @property
    def t_max(self) -> float:
        return self.t_min + (self.n_samples - 1) / self.sample_rate

    def pulse(self, t) -> np.ndarray:
        """Autocorrelation of a unit-energy pulse with a rectangular spectrum of width B"""
        return np.sinc(self.bandwidth * np.asarray(t, dtype=float))

    def sample_position(self, delay) -> np.ndarray:
        """Fractional fast-time sample index of a delay"""
        return (np.asarray(delay, dtype=float) - self.t_min) * self.sample_rate


@dataclass(frozen=True, eq=False)
class EchoCube:
    data: np.ndarray
    waveform: Waveform
    theta_i: np.ndarray
    sweeps: int
    sweep_offsets: np.ndarray
    intercepts: np.ndarray
    footprint_start: np.ndarray
    footprint_count: np.ndarray
    narrowband_margins: np.ndarray
    noise_power: float = 0.0
    seed: int = 0
    height_error: float = 0.0
    tilt: float = 0.0

    @property
    def snapshots(self) -> int:
        return self.data.shape[0]

    @property
    def sweep_length(self) -> int:
        return self.snapshots // self.sweeps

    def sweep_slice(self, sweep: int) -> slice:
        size = self.sweep_length
        return slice(sweep * size, (sweep + 1) * size)

    def to_header(self) -> Dict[str, Any]:
        return {
            'snapshots': int(self.snapshots),
            'samples': int(self.waveform.n_samples),
            'bandwidth_hz': float(self.waveform.bandwidth),
            'sample_rate_hz': float(self.waveform.sample_rate),
            't_min_s': float(self.waveform.t_min),
            'sweeps': int(self.sweeps),
            'sweep_offsets_m': [float(v) for v in self.sweep_offsets],
            'theta_i_rad': [float(v) for v in self.theta_i],
            'intercepts_m': [float(v) for v in self.intercepts],
            'footprint_start': [int(v) for v in self.footprint_start],
            'footprint_count': [int(v) for v in self.footprint_count],
            'narrowband_margins': [float(v) for v in self.narrowband_margins],
            'noise_power_w': float(self.noise_power),
            'seed': int(self.seed),
            'height_error_m': float(self.height_error),
            'tilt_rad': float(self.tilt),
        }

    @classmethod
    def from_header(cls, header: Dict[str, Any], data: np.ndarray) -> 'EchoCube':
        waveform = Waveform(bandwidth=header['bandwidth_hz'], sample_rate=header['sample_rate_hz'],
                            t_min=header['t_min_s'], n_samples=header['samples'])
        return cls(
            data=np.asarray(data, dtype=np.complex128).reshape(header['snapshots'], header['samples']),
            waveform=waveform,
            theta_i=np.asarray(header['theta_i_rad'], dtype=float),
            sweeps=header['sweeps'],
            sweep_offsets=np.asarray(header['sweep_offsets_m'], dtype=float),
            intercepts=np.asarray(header['intercepts_m'], dtype=float),
            footprint_start=np.asarray(header['footprint_start'], dtype=int),
            footprint_count=np.asarray(header['footprint_count'], dtype=int),
            narrowband_margins=np.asarray(header['narrowband_margins'], dtype=float),
            noise_power=header['noise_power_w'],
            seed=header['seed'],
            height_error=header.get('height_error_m', 0.0),
            tilt=header.get('tilt_rad', 0.0),
        )


def noise_power_w(dbm: float) -> float:
    return float(10 ** (dbm / 10) * 1e-3)


def path_loss(cfg: SourceConfig, theta_i: float, theta_o: float, d_i: float, d_o: float,
              rcs: float) -> float:
    """Radar-equation amplitude of the double bounce"""
    if d_i <= 0 or d_o <= 0:
        raise ValueError("Path lengths must be positive")
    wavelength = cfg.wavelength
    eta_source = 2 * cfg.aperture / wavelength * np.cos(theta_i)
    eta_in, eta_out = np.cos(theta_i), np.cos(theta_o)
    power = (cfg.bandwidth * cfg.pulse_duration * wavelength ** 6 * eta_source ** 2
             * eta_in ** 2 * eta_out ** 2 * rcs) / ((4 * np.pi) ** 7 * d_i ** 4 * d_o ** 4)
    return float(np.sqrt(power))


def taper_weights(count: int, kind: str = "uniform") -> np.ndarray:
    if kind == "uniform":
        return np.ones(count)
    if kind == "raised_cosine":
        return np.hanning(count + 2)[1:-1]
    raise ValueError(f"Unknown taper: {kind}")


def interpolation_kernel(position, taps: int = 8, kind: str = "sinc") -> Tuple[np.ndarray, np.ndarray]:
    """Sample indices and weights that interpolate fast-time data at fractional positions"""
    position = np.atleast_1d(np.asarray(position, dtype=float))
    base = np.floor(position).astype(int)
    if kind == "linear":
        offsets = np.array([0, 1])
        indices = base[:, None] + offsets[None, :]
        frac = (position - base)[:, None]
        weights = np.where(offsets[None, :] == 0, 1 - frac, frac)
        return indices, weights
    if kind != "sinc":
        raise ValueError(f"Unknown interpolation: {kind}")
    half = taps // 2
    offsets = np.arange(-half + 1, half + 1)
    indices = base[:, None] + offsets[None, :]
    distance = position[:, None] - indices
    weights = np.sinc(distance) * 0.5 * (1 + np.cos(np.pi * distance / half))
    return indices, weights


def sample_fast_time(row: np.ndarray, position, taps: int = 8,
                     kind: str = "sinc") -> Tuple[np.ndarray, np.ndarray]:
    """Interpolate one fast-time row; positions outside the window give zero.

    Returns the values and the mask of positions that fell inside the window.
    """
    position = np.atleast_1d(np.asarray(position, dtype=float))
    inside = (position >= 0) & (position <= row.size - 1)
    indices, weights = interpolation_kernel(np.where(inside, position, 0.0), taps, kind)
    valid = (indices >= 0) & (indices < row.size)
    samples = np.where(valid, row[np.clip(indices, 0, row.size - 1)], 0)
    values = np.sum(samples * weights, axis=1)
    return np.where(inside, values, 0), inside


def _poses(scene: SceneGeometry, codebook: TxCodebook, sweeps: int, offsets: np.ndarray,
           height_error: float = 0.0, tilt: float = 0.0):
    size = codebook.size
    for ell in range(sweeps * size):
        yield ell, codebook.angles[ell % size], snapshot_pose(
            scene, ell, height_error, tilt, offsets[ell // size])


def make_waveform(scene: SceneGeometry, cfg: SourceConfig, codebook: TxCodebook, targets: TargetSet,
                  sweeps: int = 1, offsets: Optional[Sequence[float]] = None,
                  height_error: float = 0.0, tilt: float = 0.0, oversample: int = 4,
                  guard_cells: float = 4.0) -> Waveform:
    """Fast-time axis covering the ROI over all true and nominal snapshot poses"""
    if oversample < 2:
        raise ValueError("Oversampling factor must be >= 2")
    offsets = _sweep_offsets(sweeps, offsets)
    extra = [t.position for t in targets]
    lo, hi = np.inf, -np.inf
    for perturbed in ((height_error, tilt), (0.0, 0.0)):
        for _, theta, pose in _poses(scene, codebook, sweeps, offsets, *perturbed):
            near, far = roi_delay_bounds(theta, scene, pose, extra)
            lo, hi = min(lo, near), max(hi, far)

    guard = guard_cells / cfg.bandwidth
    sample_rate = oversample * cfg.bandwidth
    t_min = 2 * lo / SPEED_OF_LIGHT - guard
    t_max = 2 * hi / SPEED_OF_LIGHT + guard
    n_samples = int(np.ceil((t_max - t_min) * sample_rate)) + 1
    return Waveform(bandwidth=cfg.bandwidth, sample_rate=sample_rate, t_min=t_min,
                    n_samples=n_samples)


def _sweep_offsets(sweeps: int, offsets: Optional[Sequence[float]]) -> np.ndarray:
    if sweeps < 1:
        raise ValueError("At least one sweep is required")
    if offsets is None or len(offsets) == 0:
        return np.zeros(sweeps)
    offsets = np.asarray(offsets, dtype=float)
    if offsets.size != sweeps:
        raise ValueError(f"Expected {sweeps} sweep offsets, got {offsets.size}")
    return offsets


def scattering_terms(plane: PlaneDesign, indices: np.ndarray, source: Tuple[float, float],
                     target: np.ndarray, d_i: float, d_o: float,
                     weights: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-atom bounce factors a_n; the double sum over (n, n') equals (sum a_n)**2"""
    x = plane.positions[indices]
    d_sn = np.hypot(x - source[0], source[1])
    d_nr = np.hypot(target[0] - x, target[1])
    w = np.ones(indices.size) if weights is None else weights
    return w * np.exp(1j * plane.phases[indices]) * np.exp(
        -1j * plane.wavenumber * (d_sn + d_nr - d_i - d_o))


def synthesize_snapshot(scene: SceneGeometry, cfg: SourceConfig, plane: PlaneDesign,
                        codebook: TxCodebook, ell: int, targets: TargetSet, waveform: Waveform,
                        noise_power: float = 0.0, seed: int = 0, offset: float = 0.0,
                        height_error: float = 0.0, tilt: float = 0.0, taper: str = "uniform",
                        footprint_mode: str = "auto") -> Tuple[np.ndarray, Dict[str, Any]]:
    """Fast-time echo of snapshot ell (global slow-time index)"""
    theta = codebook.angles[ell % codebook.size]
    pose = snapshot_pose(scene, ell, height_error, tilt, offset)
    lit = illuminated_set(cfg, scene, plane, theta, ell, pose, footprint_mode)
    weights = taper_weights(lit.indices.size, taper)

    p0 = pose.source_x + pose.source_y * np.tan(theta)
    d_i = pose.source_y / np.cos(theta)
    times = waveform.times
    k0 = cfg.wavenumber
    amplitude = np.sqrt(cfg.tx_power)
    row = np.zeros(waveform.n_samples, dtype=np.complex128)
    centre = pose.place(scene.roi_center)
    theta_o_ref = np.arctan((centre[0] - p0) / centre[1])

    for target in targets:
        if target.rcs == 0:
            continue
        r = pose.place(target.position)
        d_o = float(np.hypot(r[0] - p0, r[1]))
        theta_o = float(np.arctan((r[0] - p0) / r[1]))
        rho = path_loss(cfg, theta, theta_o, d_i, d_o, target.rcs)
        bounce = np.sum(scattering_terms(plane, lit.indices, (pose.source_x, pose.source_y),
                                         r, d_i, d_o, weights))
        delay = 2 * (d_i + d_o) / SPEED_OF_LIGHT
        row += (amplitude * rho * np.exp(1j * target.phase) * waveform.pulse(times - delay)
                * np.exp(-2j * k0 * (d_i + d_o)) * bounce * bounce)

    if noise_power > 0:
        rng = np.random.default_rng([seed, ell])
        scale = np.sqrt(noise_power / 2)
        row += scale * (rng.standard_normal(waveform.n_samples)
                        + 1j * rng.standard_normal(waveform.n_samples))

    if not np.all(np.isfinite(row)):
        raise NumericError(f"Non-finite echo samples at snapshot {ell}")

    info = {
        'intercept': float(p0),
        'start': int(lit.indices[0]),
        'count': int(lit.indices.size),
        'margin': narrowband_margin(cfg.bandwidth, lit.indices.size * plane.atom_pitch,
                                    theta, theta_o_ref),
    }
    return row, info


def synthesize_sweep(scene: SceneGeometry, cfg: SourceConfig, plane: PlaneDesign,
                     codebook: TxCodebook, targets: TargetSet, sweeps: int = 1,
                     noise_power: float = 0.0, seed: int = 0,
                     offsets: Optional[Sequence[float]] = None, height_error: float = 0.0,
                     tilt: float = 0.0, threads: Optional[int] = None,
                     waveform: Optional[Waveform] = None) -> EchoCube:
    """Echo cube over S sweeps; rows are assembled by snapshot index"""
    config = get_config()
    settings = config.simulation
    offsets = _sweep_offsets(sweeps, offsets)
    targets.validate(scene)
    cfg.check_against(scene)
    waveform = waveform or make_waveform(scene, cfg, codebook, targets, sweeps, offsets,
                                         height_error, tilt, settings.oversample,
                                         settings.guard_cells)
    total = sweeps * codebook.size
    workers = threads or config.performance.max_threads

    def run(ell: int):
        return synthesize_snapshot(scene, cfg, plane, codebook, ell, targets, waveform,
                                   noise_power, seed, offsets[ell // codebook.size],
                                   height_error, tilt, settings.taper, settings.footprint_mode)

    start_time = time.time()
    with ThreadPoolExecutor(max_workers=workers) as executor:
        results = list(executor.map(run, range(total)))

    data = np.vstack([row for row, _ in results])
    margins = np.array([info['margin'] for _, info in results])
    if np.any(margins < settings.narrowband_factor):
        worst = int(np.argmin(margins))
        logger.warning(f"Narrowband condition violated at snapshot {worst}: "
                       f"margin {margins[worst]:.2f} < {settings.narrowband_factor}")

    logger.info(f"Synthesized {total} snapshots x {waveform.n_samples} samples "
                f"in {(time.time() - start_time) * 1000:.1f}ms")
    return EchoCube(
        data=data,
        waveform=waveform,
        theta_i=np.tile(codebook.angles, sweeps),
        sweeps=sweeps,
        sweep_offsets=offsets,
        intercepts=np.array([info['intercept'] for _, info in results]),
        footprint_start=np.array([info['start'] for _, info in results]),
        footprint_count=np.array([info['count'] for _, info in results]),
        narrowband_margins=margins,
        noise_power=float(noise_power),
        seed=int(seed),
        height_error=float(height_error),
        tilt=float(tilt),
    )
