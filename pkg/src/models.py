import copy
import hashlib
import json
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.constants import c as SPEED_OF_LIGHT

from .codebook import SourceConfig
from .exceptions import ScenarioError
from .geometry import SceneGeometry, Target, TargetSet
from .perturbation import PerturbationSpec


class SceneModel(BaseModel):
    model_config = ConfigDict(extra='forbid')

    source_height_m: float = Field(..., gt=0, description="Source height D above the plane")
    source_x0_m: float = Field(0.0, description="Source abscissa at snapshot 0")
    speed_mps: float = Field(20.0, ge=0, description="Source speed along the plane")
    pri_us: float = Field(50.0, gt=0, description="Pulse repetition interval")
    roi_center_m: Tuple[float, float] = Field(..., description="ROI centre r* at snapshot 0")
    roi_extent_m: Tuple[float, float] = Field((1.0, 1.0), description="ROI size (dx, dy)")

    @field_validator('roi_extent_m')
    @classmethod
    def validate_extent(cls, v):
        if v[0] < 0 or v[1] < 0:
            raise ValueError("ROI extent must be non-negative")
        return v


class SourceModel(BaseModel):
    model_config = ConfigDict(extra='forbid')

    carrier_ghz: float = Field(77.0, gt=0, description="Carrier frequency f0")
    bandwidth_mhz: float = Field(500.0, gt=0, description="Bandwidth B")
    beamwidth_deg: Optional[float] = Field(None, gt=0, lt=90, description="Broadside -3 dB beamwidth")
    aperture_m: Optional[float] = Field(None, gt=0, description="Source aperture A")
    pulse_duration_us: float = Field(1.0, gt=0, description="Pulse duration T_s")
    tx_power_w: float = Field(1.0, ge=0, description="Reference Tx power")

    @model_validator(mode='after')
    def validate_aperture(self):
        if self.beamwidth_deg is not None and self.aperture_m is not None:
            raise ValueError("Give either beamwidth_deg or aperture_m, not both")
        if self.beamwidth_deg is None and self.aperture_m is None:
            self.beamwidth_deg = 0.5
        return self


class CodebookModel(BaseModel):
    model_config = ConfigDict(extra='forbid')

    center_deg: float = Field(40.0, gt=-90, lt=90, description="Mean Tx angle")
    span_deg: float = Field(5.0, ge=0, lt=180, description="Tx angular observation interval")
    step_deg: Optional[float] = Field(None, gt=0, description="Explicit Tx step")
    allow_aliasing: bool = Field(False, description="Keep a step above the sampling limit")
    corner_mode: Literal['all', 'diagonal'] = 'all'


class PlaneModel(BaseModel):
    model_config = ConfigDict(extra='forbid')

    period_m: Optional[float] = Field(None, gt=0, description="Pattern period; null means 2 A_eff / P")
    reflection_angles: int = Field(13, ge=1, le=10000, description="Reflection codebook size")
    gamma_deg: float = Field(0.0, description="Spatial phase of the pattern")
    gamma_policy: Literal['fixed', 'random'] = 'fixed'
    mode: Literal['stroboscopic', 'lens', 'mirror'] = 'stroboscopic'
    mirror_slope_rad: Optional[float] = Field(None, description="Per-atom phase slope in mirror mode")
    atom_pitch_mm: Optional[float] = Field(None, gt=0, description="Atom pitch; null means lambda/2")
    quantizer: Literal['cosine', 'arc', 'nearest'] = 'cosine'
    profile: Literal['continuous', 'modular'] = Field(
        'continuous', description="Integrate the phase gradient or use per-module linear phases")
    lens_target_m: Optional[Tuple[float, float]] = Field(None, description="Lens focus (ROI frame)")
    periodicity_divisor: Optional[float] = Field(None, ge=1, description="P in 2 A_eff / P")


class TargetModel(BaseModel):
    model_config = ConfigDict(extra='forbid')

    position_m: Tuple[float, float]
    rcs_m2: float = Field(1.0, ge=0, description="Radar cross section")
    phase_deg: float = 0.0


class NoiseModel(BaseModel):
    model_config = ConfigDict(extra='forbid')

    enabled: bool = False
    power_dbm: float = Field(-87.0, description="Noise power per matched-filter sample")


class GridModel(BaseModel):
    model_config = ConfigDict(extra='forbid')

    pitch_mm: Optional[float] = Field(None, gt=0, description="Pixel pitch; null uses config")
    center_m: Optional[Tuple[float, float]] = None
    extent_m: Optional[Tuple[float, float]] = None


class PerturbationModel(BaseModel):
    model_config = ConfigDict(extra='forbid')

    epsilon_mm: float = Field(0.0, description="Error on the source height")
    beta_deg: float = Field(0.0, gt=-10, lt=10, description="Trajectory tilt")


class Scenario(BaseModel):
    model_config = ConfigDict(extra='forbid')

    scene: SceneModel
    source: SourceModel
    codebook: CodebookModel
    plane: PlaneModel
    targets: List[TargetModel] = Field(default_factory=list)
    sweeps: int = Field(1, ge=1, le=1024)
    noise: NoiseModel = Field(default_factory=NoiseModel)
    grid: GridModel = Field(default_factory=GridModel)
    perturbation: PerturbationModel = Field(default_factory=PerturbationModel)
    seed: int = Field(0, ge=0, lt=2 ** 64)

    @model_validator(mode='after')
    def validate_physics(self):
        cx, cy = self.scene.roi_center_m
        hx, hy = self.scene.roi_extent_m[0] / 2, self.scene.roi_extent_m[1] / 2
        if cy - hy <= 0:
            raise ValueError("ROI lies behind or across the reflection plane")
        if self.source.pulse_duration_us > self.scene.pri_us:
            raise ValueError("Pulse duration T_s exceeds the PRI")
        if self.source.bandwidth_mhz * 1e6 >= self.source.carrier_ghz * 1e9:
            raise ValueError("Bandwidth must be smaller than the carrier frequency")
        for index, target in enumerate(self.targets):
            x, y = target.position_m
            if abs(x - cx) > hx + 1e-9 or abs(y - cy) > hy + 1e-9:
                raise ValueError(f"targets[{index}] lies outside the ROI")
        return self

    def to_scene(self) -> SceneGeometry:
        s = self.scene
        return SceneGeometry(source_height=s.source_height_m, source_x0=s.source_x0_m,
                             speed=s.speed_mps, pri=s.pri_us * 1e-6,
                             roi_center=tuple(s.roi_center_m), roi_extent=tuple(s.roi_extent_m))

    def to_source(self) -> SourceConfig:
        s = self.source
        carrier = s.carrier_ghz * 1e9
        if s.aperture_m is not None:
            return SourceConfig(carrier, s.bandwidth_mhz * 1e6, s.aperture_m,
                                s.pulse_duration_us * 1e-6, s.tx_power_w)
        return SourceConfig.from_beamwidth(carrier, s.bandwidth_mhz * 1e6,
                                           np.radians(s.beamwidth_deg),
                                           s.pulse_duration_us * 1e-6, s.tx_power_w)

    def to_targets(self) -> TargetSet:
        return TargetSet(tuple(Target(tuple(t.position_m), t.rcs_m2, np.radians(t.phase_deg))
                               for t in self.targets))

    def to_perturbation(self) -> PerturbationSpec:
        gamma = None if self.plane.gamma_policy == 'random' else np.radians(self.plane.gamma_deg)
        return PerturbationSpec(epsilon=self.perturbation.epsilon_mm * 1e-3,
                                beta=np.radians(self.perturbation.beta_deg),
                                gamma=gamma, seed=self.seed)

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / (self.source.carrier_ghz * 1e9)


REFERENCE_DEFAULTS: Dict[str, Any] = {
    'scene': {
        'source_height_m': 5.0,
        'source_x0_m': 0.0,
        'speed_mps': 20.0,
        'pri_us': 50.0,
        'roi_center_m': [13.8, 11.0],
        'roi_extent_m': [1.0, 1.0],
    },
    'source': {
        'carrier_ghz': 77.0,
        'bandwidth_mhz': 500.0,
        'beamwidth_deg': 0.5,
        'pulse_duration_us': 1.0,
        'tx_power_w': 1.0,
    },
    'codebook': {'center_deg': 40.0, 'span_deg': 5.0},
    'plane': {'period_m': 2.0, 'reflection_angles': 13, 'mode': 'stroboscopic'},
    'targets': [{'position_m': [13.8, 11.0], 'rcs_m2': 1.0}],
    'sweeps': 1,
    'noise': {'enabled': False, 'power_dbm': -87.0},
    'seed': 0,
}

SYNTHESIS_SECTIONS = ('scene', 'source', 'codebook', 'plane', 'targets', 'sweeps', 'noise',
                      'perturbation', 'seed')


def load_scenario_data(path: Optional[str], reference_defaults: bool = False) -> Dict[str, Any]:
    """Raw scenario mapping from a YAML file, optionally layered on the reference set"""
    data: Dict[str, Any] = copy.deepcopy(REFERENCE_DEFAULTS) if reference_defaults else {}
    if path:
        with open(path, 'r', encoding='utf-8') as file:
            loaded = yaml.safe_load(file) or {}
        if not isinstance(loaded, dict):
            raise ScenarioError(f"{path}: scenario must be a mapping")
        data = _merge(data, loaded)
    return data


def _merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def apply_overrides(data: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    """Apply dotted key=value overrides; values are parsed as YAML scalars"""
    data = copy.deepcopy(data)
    for item in overrides:
        if '=' not in item:
            raise ScenarioError(f"Override '{item}' is not of the form key=value")
        key, raw = item.split('=', 1)
        parts = key.strip().split('.')
        node = data
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ScenarioError(f"Override '{key}' descends into a non-mapping")
        node[parts[-1]] = yaml.safe_load(raw)
    return data


def canonical_json(data: Dict[str, Any]) -> bytes:
    return json.dumps(data, sort_keys=True, separators=(',', ':')).encode('utf-8')


def scenario_hash(scenario: Scenario) -> str:
    return hashlib.sha256(canonical_json(scenario.model_dump(mode='json'))).hexdigest()


def synthesis_hash(scenario: Scenario) -> str:
    """Hash of the sections that determine the echo cube"""
    dump = scenario.model_dump(mode='json')
    return hashlib.sha256(canonical_json({k: dump[k] for k in SYNTHESIS_SECTIONS})).hexdigest()


class DesignReport(BaseModel):
    scenario_hash: str
    mode: str
    tx_angles: int
    tx_step_deg: float
    tx_limit_deg: float
    tx_compliant: bool
    tx_corner_mode: str
    tx_limit_diagonal_deg: float
    effective_aperture_m: float
    observation_time_s: float
    travel_per_sweep_m: float
    period_m: float
    theta_o_bar_deg: float
    span_o_deg: float
    reflection_angles_deg: List[float]
    reflection_step_deg: float
    reflection_step_limit_deg: float
    module_size: float
    module_size_max: float
    module_width_m: float
    min_reflection_angles: int
    atom_pitch_m: float
    atom_count: int
    narrowband_margins: List[float]
    narrowband_passed: bool
    narrowband_factor: float
    focus_residual_rad: float
    warnings: List[str] = Field(default_factory=list)


class RunManifest(BaseModel):
    scenario_hash: str
    seed: int
    snapshots: int
    samples: int
    sweeps: int
    sweep_offsets_m: List[float]
    narrowband_min_margin: float
    noise_power_w: float
    files: Dict[str, str] = Field(default_factory=dict)
    timings_ms: Dict[str, float] = Field(default_factory=dict)


class ImageMetricsReport(BaseModel):
    scenario_hash: str
    tag: str
    peak_position_m: List[float]
    peak_value: float
    width_x_m: float
    width_y_m: float
    islr: float
    islr_db: float
    highest_sidelobe_db: float
    mainlobe_region_m: List[float]
    peak_shift: Optional[Dict[str, float]] = None


class StudyRow(BaseModel):
    point: Dict[str, Any]
    metrics: Dict[str, Any] = Field(default_factory=dict)


class StudyReport(BaseModel):
    study: str
    scenario_hash: str
    success_count: int
    failed_count: int
    total_count: int
    rows: List[StudyRow]
    errors: List[dict] = Field(default_factory=list)
    processing_time_ms: float
