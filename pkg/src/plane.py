"""Static reflection plane: periodic anomalous design, lens and mirror references."""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from .codebook import SourceConfig, TxCodebook, footprint_length
from .exceptions import DesignError, ScenarioError
from .geometry import SceneGeometry, reflection_angle_to_target, roi_corners, snapshot_pose

logger = logging.getLogger(__name__)

MODES = ("stroboscopic", "lens", "mirror")
QUANTIZERS = ("cosine", "arc", "nearest")
PROFILES = ("continuous", "modular")


@dataclass(frozen=True)
class StepLimit:
    step_limit: float
    module_size: float
    module_size_max: float
    min_angles: int
    compliant: bool


@dataclass(frozen=True, eq=False)
class PlaneDesign:
    atom_pitch: float
    atom_count: int
    first_index: int
    origin_x: float
    phases: np.ndarray
    wavelength: float
    period: float
    theta_i_bar: float
    theta_o_bar: float
    span_o: float
    angles_o: np.ndarray
    step_o: float
    module_size: int
    gamma: float
    mode: str
    quantizer: str = "cosine"
    profile: str = "continuous"
    angle_index: Optional[np.ndarray] = None
    lens_source: Optional[Tuple[float, float]] = None
    lens_target: Optional[Tuple[float, float]] = None
    mirror_slope: float = 0.0
    step_limit: Optional[StepLimit] = None

    @property
    def wavenumber(self) -> float:
        return 2 * np.pi / self.wavelength

    @property
    def lattice(self) -> np.ndarray:
        """Global lattice index of every atom"""
        return self.first_index + np.arange(self.atom_count)

    @property
    def local_positions(self) -> np.ndarray:
        """Atom abscissae measured from the plane origin"""
        return self.lattice * self.atom_pitch

    @property
    def positions(self) -> np.ndarray:
        return self.origin_x + self.local_positions

    @property
    def module_width(self) -> float:
        return self.period / (2 * len(self.angles_o))

    @property
    def offsets(self) -> Optional[np.ndarray]:
        """Quantized reflection offset of every atom (stroboscopic mode)"""
        if self.angle_index is None:
            return None
        return self.angles_o[self.angle_index] - self.theta_i_bar

    def offset_at(self, x) -> np.ndarray:
        """Quantized reflection offset at absolute abscissa x"""
        u = np.asarray(x, dtype=float) - self.origin_x
        index = module_angle_index(u, self.period, self.gamma, len(self.angles_o),
                                   self.theta_o_bar - self.theta_i_bar, self.span_o,
                                   self.angles_o - self.theta_i_bar, self.quantizer)
        return self.angles_o[index] - self.theta_i_bar

    def phase_at(self, x) -> np.ndarray:
        """Continuous design phase at absolute abscissa x, wrapped to [0, 2pi)"""
        x = np.asarray(x, dtype=float)
        k0 = self.wavenumber
        if self.mode == "stroboscopic" and self.profile == "continuous":
            index = np.clip(np.rint((x - self.positions[0]) / self.atom_pitch),
                            0, self.atom_count - 1).astype(int)
            theta_o = self.angles_o[self.angle_index[index]]
            gradient = k0 * (np.sin(self.theta_i_bar) - np.sin(theta_o))
            phase = self.phases[index] + gradient * (x - self.positions[index])
        elif self.mode == "stroboscopic":
            u = x - self.origin_x
            offset = self.offset_at(x)
            phase = k0 * u * (np.sin(self.theta_i_bar) - np.sin(self.theta_i_bar + offset))
        elif self.mode == "lens":
            sx, sy = self.lens_source
            rx, ry = self.lens_target
            phase = k0 * (np.hypot(x - sx, sy) + np.hypot(rx - x, ry))
        else:
            phase = self.mirror_slope * (x - self.origin_x) / self.atom_pitch
        return np.mod(phase, 2 * np.pi)

    def phase_gradient(self, x) -> np.ndarray:
        """d(phase)/dx at absolute abscissa x"""
        x = np.asarray(x, dtype=float)
        k0 = self.wavenumber
        if self.mode == "stroboscopic":
            offset = self.offset_at(x)
            return k0 * (np.sin(self.theta_i_bar) - np.sin(self.theta_i_bar + offset))
        if self.mode == "lens":
            sx, sy = self.lens_source
            rx, ry = self.lens_target
            return k0 * ((x - sx) / np.hypot(x - sx, sy) - (rx - x) / np.hypot(rx - x, ry))
        return np.full_like(x, self.mirror_slope / self.atom_pitch)

    def local_reflection_angle(self, theta_i: float, x) -> np.ndarray:
        """Generalized-Snell output angle at x for incidence theta_i"""
        sin_out = np.sin(theta_i) - self.phase_gradient(x) / self.wavenumber
        return np.arcsin(np.clip(sin_out, -1.0, 1.0))

    def to_header(self) -> Dict[str, Any]:
        return {
            'mode': self.mode,
            'quantizer': self.quantizer,
            'profile': self.profile,
            'atom_pitch_m': float(self.atom_pitch),
            'atom_count': int(self.atom_count),
            'first_index': int(self.first_index),
            'origin_x_m': float(self.origin_x),
            'wavelength_m': float(self.wavelength),
            'period_m': float(self.period),
            'theta_i_bar_rad': float(self.theta_i_bar),
            'theta_o_bar_rad': float(self.theta_o_bar),
            'span_o_rad': float(self.span_o),
            'angles_o_rad': [float(a) for a in self.angles_o],
            'step_o_rad': float(self.step_o),
            'module_size': int(self.module_size),
            'gamma_rad': float(self.gamma),
            'lens_source_m': [float(v) for v in self.lens_source] if self.lens_source else None,
            'lens_target_m': [float(v) for v in self.lens_target] if self.lens_target else None,
            'mirror_slope_rad': float(self.mirror_slope),
        }

    @classmethod
    def from_header(cls, header: Dict[str, Any], phases: np.ndarray) -> 'PlaneDesign':
        """Rebuild a plane from an exported header and its phase payload"""
        angles_o = np.asarray(header['angles_o_rad'], dtype=float)
        plane = cls(
            atom_pitch=header['atom_pitch_m'],
            atom_count=header['atom_count'],
            first_index=header['first_index'],
            origin_x=header['origin_x_m'],
            phases=phases,
            wavelength=header['wavelength_m'],
            period=header['period_m'],
            theta_i_bar=header['theta_i_bar_rad'],
            theta_o_bar=header['theta_o_bar_rad'],
            span_o=header['span_o_rad'],
            angles_o=angles_o,
            step_o=header['step_o_rad'],
            module_size=header['module_size'],
            gamma=header['gamma_rad'],
            mode=header['mode'],
            quantizer=header.get('quantizer', 'cosine'),
            profile=header.get('profile', 'continuous'),
            lens_source=tuple(header['lens_source_m']) if header.get('lens_source_m') else None,
            lens_target=tuple(header['lens_target_m']) if header.get('lens_target_m') else None,
            mirror_slope=header.get('mirror_slope_rad', 0.0),
        )
        if plane.mode == "stroboscopic":
            index = module_angle_index(plane.local_positions, plane.period, plane.gamma,
                                       len(angles_o), plane.theta_o_bar - plane.theta_i_bar,
                                       plane.span_o, angles_o - plane.theta_i_bar, plane.quantizer)
            object.__setattr__(plane, 'angle_index', index)
        return plane


def continuous_reflection_offset(x, period: float, theta_i_bar: float, theta_o_bar: float,
                                 span_o: float, gamma: float = 0.0):
    """Periodic anomalous reflection offset before quantization"""
    if period <= 0:
        raise ScenarioError("Period must be positive")
    x = np.asarray(x, dtype=float)
    return (theta_o_bar - theta_i_bar) + span_o / 2 * np.cos(2 * np.pi * x / period + gamma)


def design_reflection_span(scene: SceneGeometry, theta_i_bar: float) -> Tuple[float, float]:
    """Centre reflection angle and the spread of reflection angles over the ROI corners"""
    theta_o_bar = float(reflection_angle_to_target(theta_i_bar, scene, scene.roi_center))
    corners = reflection_angle_to_target(theta_i_bar, scene, roi_corners(scene))
    return theta_o_bar, float(np.max(corners) - np.min(corners))


def quantize_offset(value, grid: Sequence[float]) -> np.ndarray:
    """Nearest grid entry, ties broken toward the smaller entry"""
    grid = np.asarray(grid, dtype=float)
    return grid[quantize_index(value, grid)]


def quantize_index(value, grid: Sequence[float]) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("Quantization grid is empty")
    value = np.asarray(value, dtype=float)
    right = np.clip(np.searchsorted(grid, value, side='left'), 0, grid.size - 1)
    left = np.clip(right - 1, 0, grid.size - 1)
    pick_left = np.abs(value - grid[left]) <= np.abs(grid[right] - value)
    return np.where(pick_left, left, right)


def module_angle_index(u, period: float, gamma: float, n_angles: int, mean_offset: float,
                       span_o: float, grid: np.ndarray, quantizer: str = "cosine") -> np.ndarray:
    """Codebook index of the module containing plane abscissa u.

    "cosine" quantizes the periodic offset atom by atom, so module widths follow
    the cosine law. "arc" and "nearest" use 2*n_angles equal-width modules per
    period; "arc" walks the codebook downward over the first half period and
    upward over the second.
    """
    u = np.asarray(u, dtype=float)
    fraction = np.mod(u / period + gamma / (2 * np.pi), 1.0)
    module = np.minimum(np.floor(fraction * 2 * n_angles), 2 * n_angles - 1)
    centre_phase = (module + 0.5) * np.pi / n_angles

    if quantizer == "cosine":
        shape = np.cos(2 * np.pi * fraction)
    elif quantizer == "arc":
        half = np.where(module < n_angles, module, module - n_angles)
        ramp = 1 - (2 * half + 1) / n_angles
        shape = np.where(module < n_angles, ramp, -ramp)
    elif quantizer == "nearest":
        shape = np.cos(centre_phase)
    else:
        raise ValueError(f"Unknown quantizer: {quantizer}")
    return quantize_index(mean_offset + span_o / 2 * shape, grid)


def reflection_step_limit(wavelength: float, pitch: float, period: float, n_angles: int,
                          angles_o: Sequence[float], span_o: float) -> StepLimit:
    """Reflection codebook step bound and the largest admissible module size"""
    if n_angles < 1:
        raise DesignError("Reflection codebook needs at least one angle")
    module = period / (2 * n_angles * pitch)
    cos_max = float(np.max(np.cos(np.asarray(angles_o, dtype=float))))
    step_limit = 0.5 * wavelength / (module * pitch * cos_max)

    if span_o > 0:
        module_max = np.sqrt(period * wavelength / (8 * span_o * cos_max)) / pitch
        min_angles = max(1, int(np.ceil(2 * span_o / step_limit - 1e-9)))
    else:
        module_max = float('inf')
        min_angles = 1
    if module_max < 1:
        raise DesignError(
            f"No reflection codebook satisfies the step bound: even single-atom modules "
            f"need more than {period / (2 * pitch):.0f} angles per half period")
    return StepLimit(step_limit=float(step_limit), module_size=float(module),
                     module_size_max=float(module_max), min_angles=min_angles,
                     compliant=bool(module <= module_max))


def _plane_extent(scene: SceneGeometry, cfg: SourceConfig, codebook: TxCodebook, sweeps: int,
                  offsets: Sequence[float], margin: float) -> Tuple[float, float]:
    size = codebook.size
    lows, highs = [], []
    for sweep in range(sweeps):
        offset = offsets[sweep] if sweep < len(offsets) else 0.0
        for k, theta in enumerate(codebook.angles):
            pose = snapshot_pose(scene, sweep * size + k, offset=offset)
            p0 = pose.source_x + pose.source_y * np.tan(theta)
            half = footprint_length(cfg, scene, theta, pose.source_y) / 2
            lows.append(p0 - half)
            highs.append(p0 + half)
    return min(lows) - margin, max(highs) + margin


def build_plane(scene: SceneGeometry, cfg: SourceConfig, codebook: TxCodebook, period: float,
                n_angles: int, gamma: float = 0.0, mode: str = "stroboscopic",
                pitch: Optional[float] = None, sweeps: int = 1, offsets: Sequence[float] = (),
                lens_target: Optional[Tuple[float, float]] = None,
                mirror_slope: Optional[float] = None, quantizer: str = "cosine",
                profile: str = "continuous") -> PlaneDesign:
    """Design the reflection plane for a codebook and ROI"""
    if mode not in MODES:
        raise ScenarioError(f"Unknown plane mode: {mode}")
    if quantizer not in QUANTIZERS:
        raise ScenarioError(f"Unknown quantizer: {quantizer}")
    if profile not in PROFILES:
        raise ScenarioError(f"Unknown phase profile: {profile}")
    if period <= 0:
        raise ScenarioError("Period must be positive")
    wavelength = cfg.wavelength
    pitch = pitch or wavelength / 2
    k0 = 2 * np.pi / wavelength

    theta_i_bar = codebook.center
    theta_o_bar, span = design_reflection_span(scene, theta_i_bar)
    # per-atom phase step must stay below pi
    edges = np.array([theta_o_bar - span / 2, theta_o_bar + span / 2])
    steering = np.max(np.abs(np.sin(theta_i_bar) - np.sin(edges)))
    if abs(theta_o_bar) + span / 2 >= np.pi / 2 or steering > wavelength / (2 * pitch):
        raise DesignError(
            f"ROI lies outside the reachable reflection span: anomalous steering "
            f"{steering:.3f} exceeds lambda/(2d)={wavelength / (2 * pitch):.3f}")
    if (span == 0 or scene.is_degenerate) and n_angles > 1:
        logger.warning("Degenerate ROI: reflection span is zero, using a single angle")
        n_angles = 1

    if n_angles > 1:
        step_o = span / (n_angles - 1)
        angles_o = theta_o_bar - span / 2 + step_o * np.arange(n_angles)
    else:
        step_o = 0.0
        angles_o = np.array([theta_o_bar])

    limit = reflection_step_limit(wavelength, pitch, period, n_angles, angles_o, span)
    if step_o > limit.step_limit:
        logger.warning(f"Reflection step {np.degrees(step_o):.4f} deg exceeds the beam-overlap "
                       f"bound {np.degrees(limit.step_limit):.4f} deg")
    if not limit.compliant:
        logger.warning(f"Module size {limit.module_size:.1f} atoms exceeds the maximum "
                       f"{limit.module_size_max:.1f}")

    x_lo, x_hi = _plane_extent(scene, cfg, codebook, sweeps, offsets, period / 2)
    origin_x = scene.plane_origin[0]
    first = int(np.floor((x_lo - origin_x) / pitch))
    last = int(np.ceil((x_hi - origin_x) / pitch))
    count = last - first + 1
    u = (first + np.arange(count)) * pitch
    x = origin_x + u

    angle_index = None
    lens_source = lens_point = None
    slope = 0.0
    if mode == "stroboscopic":
        grid = angles_o - theta_i_bar
        angle_index = module_angle_index(u, period, gamma, n_angles, theta_o_bar - theta_i_bar,
                                         span, grid, quantizer)
        gradient = k0 * (np.sin(theta_i_bar) - np.sin(theta_i_bar + grid[angle_index]))
        if profile == "continuous":
            # integrate the local gradient so the phase has no jumps at module edges
            steps = pitch * (gradient[1:] + gradient[:-1]) / 2
            phases = u[0] * gradient[0] + np.concatenate([[0.0], np.cumsum(steps)])
        else:
            phases = u * gradient
    elif mode == "lens":
        middle = snapshot_pose(scene, (codebook.size - 1) / 2)
        lens_source = (float(middle.source_x), float(middle.source_y))
        target = lens_target if lens_target is not None else scene.roi_center
        lens_point = tuple(float(v) for v in middle.place(target))
        phases = focusing_phases(lens_source, lens_point, x, wavelength)
    else:
        slope = (mirror_slope if mirror_slope is not None
                 else k0 * pitch * (np.sin(theta_i_bar) - np.sin(theta_o_bar)))
        phases = slope * (first + np.arange(count))

    logger.info(f"Plane ({mode}): {count} atoms, pitch {pitch * 1e3:.3f} mm, "
                f"|Theta_o|={n_angles}, module {limit.module_size:.1f} atoms")
    return PlaneDesign(
        atom_pitch=pitch, atom_count=count, first_index=first, origin_x=origin_x,
        phases=np.mod(phases, 2 * np.pi), wavelength=wavelength, period=period,
        theta_i_bar=theta_i_bar, theta_o_bar=theta_o_bar, span_o=span, angles_o=angles_o,
        step_o=step_o, module_size=int(round(limit.module_size)), gamma=gamma, mode=mode,
        quantizer=quantizer, profile=profile, angle_index=angle_index, lens_source=lens_source,
        lens_target=lens_point, mirror_slope=float(slope), step_limit=limit,
    )


def focusing_phases(source, target, atoms_x, wavelength: float) -> np.ndarray:
    """Per-bounce lens phases k0 (D_sn + D_nr), wrapped to [0, 2pi)"""
    atoms_x = np.asarray(atoms_x, dtype=float)
    sx, sy = source
    rx, ry = target
    k0 = 2 * np.pi / wavelength
    return np.mod(k0 * (np.hypot(atoms_x - sx, sy) + np.hypot(rx - atoms_x, ry)), 2 * np.pi)


def dirichlet_pattern(pitch: float, wavelength: float, n_atoms: int, theta_ref: float,
                      theta_query) -> np.ndarray:
    """Closed-form single-module reflection pattern"""
    psi = np.pi * pitch / wavelength * (np.sin(np.asarray(theta_query, dtype=float))
                                        - np.sin(theta_ref))
    denominator = np.sin(psi)
    numerator = np.sin(n_atoms * psi)
    small = np.abs(denominator) < 1e-12
    safe = np.where(small, 1.0, denominator)
    limit = n_atoms * np.cos(n_atoms * psi) / np.where(small, np.cos(psi), 1.0)
    return np.where(small, limit, numerator / safe)


def reflection_pattern(plane: PlaneDesign, indices: Sequence[int], theta_query,
                       theta_i: Optional[float] = None,
                       weights: Optional[np.ndarray] = None) -> np.ndarray:
    """Far-field array factor of the illuminated atoms for incidence theta_i"""
    theta_i = plane.theta_i_bar if theta_i is None else theta_i
    indices = np.asarray(indices, dtype=int)
    u = plane.local_positions[indices]
    w = np.ones(indices.size) if weights is None else np.asarray(weights)
    theta_query = np.atleast_1d(np.asarray(theta_query, dtype=float))
    steering = np.sin(theta_i) - np.sin(theta_query)
    terms = w[None, :] * np.exp(1j * (plane.phases[indices][None, :]
                                      - plane.wavenumber * u[None, :] * steering[:, None]))
    return terms.sum(axis=1)
