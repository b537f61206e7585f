import hashlib
import logging
import time
from dataclasses import dataclass, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import psutil
from scipy.constants import c as SPEED_OF_LIGHT

from .codebook import (SourceConfig, TxCodebook, angular_sampling_limit, build_codebook,
                       effective_aperture, illuminated_set, narrowband_check)
from .config import get_config, setup_logging
from .exceptions import NlosError
from .geometry import (SceneGeometry, TargetSet, bearing, reflection_angle_to_target,
                       snapshot_pose)
from .imaging import (ImageGrid, backproject_sweeps, combine_sweeps, grid_from_spec,
                      image_metrics, islr, peak_shift, secondary_lobes)
from .models import (DesignReport, ImageMetricsReport, RunManifest, Scenario, StudyReport,
                     StudyRow, apply_overrides, scenario_hash, synthesis_hash)
from .perturbation import (PerturbationSpec, distance_error_profile, distance_factor_table,
                           draw_gammas, gamma_offsets, predicted_degraded_image,
                           random_illumination_study, taylor_distance_factors)
from .plane import PlaneDesign, build_plane
from .signal import EchoCube, noise_power_w, synthesize_sweep
from .tomography import (WavenumberCoverage, coverage, footprint_sets, residual_phase_spread,
                         specular_subset)

# Setup logging
setup_logging()
logger = logging.getLogger(__name__)

STUDIES = ('sweep-convergence', 'module-size', 'periodicity', 'near-field', 'gamma',
           'aliasing', 'perturbation')


@dataclass
class Pipeline:
    """Numeric domain objects built from one scenario"""
    scenario: Scenario
    scene: SceneGeometry
    source: SourceConfig
    codebook: TxCodebook
    targets: TargetSet
    perturbation: PerturbationSpec
    period: float
    gammas: np.ndarray
    offsets: np.ndarray
    plane: Optional[PlaneDesign] = None

    @property
    def noise_power(self) -> float:
        noise = self.scenario.noise
        return noise_power_w(noise.power_dbm) if noise.enabled else 0.0


class ImagingService:
    def __init__(self, threads: Optional[int] = None):
        self.config = get_config()
        self.threads = threads or self.config.performance.max_threads
        self._cube_cache: Dict[str, EchoCube] = {}
        logger.info(f"ImagingService initialized with {self.threads} worker threads")

    def prepare(self, scenario: Scenario) -> Pipeline:
        """Validate the scenario against the physics and build the Tx side"""
        scene = scenario.to_scene()
        source = scenario.to_source()
        source.check_against(scene)
        targets = scenario.to_targets()
        targets.validate(scene)

        request = scenario.codebook
        codebook = build_codebook(
            scene, source, np.radians(request.center_deg), np.radians(request.span_deg),
            override_step=np.radians(request.step_deg) if request.step_deg else None,
            allow_aliasing=request.allow_aliasing, corner_mode=request.corner_mode)

        period = scenario.plane.period_m
        if period is None:
            aperture = effective_aperture(scene, codebook.center, codebook.span)
            period = 2 * aperture / (scenario.plane.periodicity_divisor or 1.0)
            logger.info(f"Pattern period set to {period:.3f} m from A_eff={aperture:.3f} m")

        perturbation = scenario.to_perturbation()
        gammas = perturbation.sweep_gammas(scenario.sweeps)
        return Pipeline(scenario=scenario, scene=scene, source=source, codebook=codebook,
                        targets=targets, perturbation=perturbation, period=period,
                        gammas=gammas, offsets=gamma_offsets(gammas, period))

    def design(self, scenario: Scenario) -> Tuple[Pipeline, DesignReport]:
        """Design the reflection plane and report its parameters"""
        pipeline = self.prepare(scenario)
        request = scenario.plane
        plane = build_plane(
            pipeline.scene, pipeline.source, pipeline.codebook, pipeline.period,
            request.reflection_angles, mode=request.mode,
            pitch=request.atom_pitch_mm * 1e-3 if request.atom_pitch_mm else None,
            sweeps=scenario.sweeps, offsets=pipeline.offsets,
            lens_target=tuple(request.lens_target_m) if request.lens_target_m else None,
            mirror_slope=request.mirror_slope_rad, quantizer=request.quantizer,
            profile=request.profile)
        pipeline.plane = plane
        return pipeline, self._design_report(pipeline)

    def with_plane(self, scenario: Scenario, plane: PlaneDesign) -> Pipeline:
        pipeline = self.prepare(scenario)
        pipeline.plane = plane
        return pipeline

    def _design_report(self, pipeline: Pipeline) -> DesignReport:
        scene, codebook, plane = pipeline.scene, pipeline.codebook, pipeline.plane
        reflection = [float(reflection_angle_to_target(theta, scene, scene.roi_center, ell))
                      for ell, theta in enumerate(codebook.angles)]
        narrowband = narrowband_check(pipeline.source, scene, plane, codebook, reflection,
                                      self.config.simulation.narrowband_factor,
                                      self.config.simulation.footprint_mode)
        limit = plane.step_limit
        warnings = []
        if not codebook.compliant:
            warnings.append("Tx step exceeds the angular sampling limit")
        if codebook.size == 1:
            warnings.append("Single-angle Tx codebook")
        if len(plane.angles_o) == 1:
            warnings.append("Single-angle reflection codebook")
        if limit is not None and not limit.compliant:
            warnings.append("Module size exceeds the maximum for the reflection step bound")
        if not narrowband.passed:
            warnings.append("Narrowband condition violated")
        diagonal = angular_sampling_limit(scene, pipeline.source, codebook.center, codebook.span,
                                          corner_mode="diagonal")

        return DesignReport(
            scenario_hash=scenario_hash(pipeline.scenario),
            mode=plane.mode,
            tx_angles=codebook.size,
            tx_step_deg=float(np.degrees(codebook.step)),
            tx_limit_deg=float(np.degrees(codebook.limit)),
            tx_compliant=codebook.compliant,
            tx_corner_mode=codebook.corner_mode,
            tx_limit_diagonal_deg=float(np.degrees(diagonal)),
            effective_aperture_m=effective_aperture(scene, codebook.center, codebook.span),
            observation_time_s=codebook.observation_time(scene.pri),
            travel_per_sweep_m=codebook.size * scene.step,
            period_m=plane.period,
            theta_o_bar_deg=float(np.degrees(plane.theta_o_bar)),
            span_o_deg=float(np.degrees(plane.span_o)),
            reflection_angles_deg=[float(a) for a in np.degrees(plane.angles_o)],
            reflection_step_deg=float(np.degrees(plane.step_o)),
            reflection_step_limit_deg=float(np.degrees(limit.step_limit)) if limit else 0.0,
            module_size=limit.module_size if limit else float(plane.module_size),
            module_size_max=limit.module_size_max if limit else float('inf'),
            module_width_m=plane.module_width,
            min_reflection_angles=limit.min_angles if limit else 1,
            atom_pitch_m=plane.atom_pitch,
            atom_count=plane.atom_count,
            narrowband_margins=[float(m) for m in narrowband.margins],
            narrowband_passed=narrowband.passed,
            narrowband_factor=narrowband.factor,
            focus_residual_rad=self._focus_residual(pipeline),
            warnings=warnings,
        )

    def _focus_residual(self, pipeline: Pipeline) -> float:
        """Round-trip phase spread left over the mid-sweep footprint toward the ROI centre"""
        scene, codebook, plane = pipeline.scene, pipeline.codebook, pipeline.plane
        middle = codebook.size // 2
        pose = snapshot_pose(scene, middle)
        lit = illuminated_set(pipeline.source, scene, plane, codebook.angles[middle], middle,
                              pose, self.config.simulation.footprint_mode)
        target = pose.place(scene.roi_center)
        return residual_phase_spread((pose.source_x, pose.source_y), target,
                                     plane.positions[lit.indices], plane.phases[lit.indices],
                                     plane.wavelength)

    def simulate(self, pipeline: Pipeline) -> Tuple[EchoCube, RunManifest]:
        """Echo cube for the pipeline, reused from the cache when the scenario repeats"""
        key = synthesis_hash(pipeline.scenario) + ":" + hashlib.sha256(
            pipeline.plane.phases.tobytes()).hexdigest()
        start_time = time.time()
        cube = self._cube_cache.get(key)
        if cube is None:
            scenario = pipeline.scenario
            cube = synthesize_sweep(
                pipeline.scene, pipeline.source, pipeline.plane, pipeline.codebook,
                pipeline.targets, sweeps=scenario.sweeps, noise_power=pipeline.noise_power,
                seed=scenario.seed, offsets=pipeline.offsets,
                height_error=pipeline.perturbation.epsilon, tilt=pipeline.perturbation.beta,
                threads=self.threads)
            self._cube_cache[key] = cube
            self._check_memory()
        else:
            logger.info("Reusing cached echo cube")

        manifest = RunManifest(
            scenario_hash=scenario_hash(pipeline.scenario),
            seed=pipeline.scenario.seed,
            snapshots=cube.snapshots,
            samples=cube.waveform.n_samples,
            sweeps=cube.sweeps,
            sweep_offsets_m=[float(v) for v in cube.sweep_offsets],
            narrowband_min_margin=float(cube.narrowband_margins.min()),
            noise_power_w=cube.noise_power,
            timings_ms={'simulate': (time.time() - start_time) * 1000},
        )
        return cube, manifest

    def _check_memory(self) -> None:
        rss_mb = psutil.Process().memory_info().rss / 1024 / 1024
        limit = self.config.performance.max_memory_mb
        if rss_mb > limit:
            logger.warning(f"Process memory {rss_mb:.0f}MB exceeds the {limit}MB budget; "
                           f"reduce sweeps or the grid size")
        else:
            logger.debug(f"Process memory {rss_mb:.0f}MB")

    def grid(self, pipeline: Pipeline) -> ImageGrid:
        spec = pipeline.scenario.grid
        pitch = (spec.pitch_mm or self.config.imaging.pixel_pitch_mm) * 1e-3
        return grid_from_spec(pipeline.scene, pitch, spec.center_m, spec.extent_m)

    def image(self, pipeline: Pipeline, cube: EchoCube, assumed: Optional[SceneGeometry] = None,
              tag: str = "stroboscopic",
              region: Optional[Tuple[float, float]] = None) -> Tuple[ImageGrid, ImageMetricsReport]:
        """Back-project every sweep, combine coherently and measure the point-spread"""
        assumed = assumed or pipeline.scene
        grid = self.grid(pipeline)
        images = backproject_sweeps(cube, assumed, pipeline.plane, pipeline.source, grid,
                                    threads=self.threads)
        image = combine_sweeps(images)
        image = replace(image, provenance={**image.provenance, 'tag': tag,
                                           'scenario_hash': scenario_hash(pipeline.scenario)})
        return image, self.measure(pipeline, image, tag, region)

    def measure(self, pipeline: Pipeline, image: ImageGrid, tag: str = "stroboscopic",
                region: Optional[Tuple[float, float]] = None) -> ImageMetricsReport:
        """Point-spread metrics of an image, with the peak shift against the first target"""
        metrics = image_metrics(image, region)
        shift = None
        if len(pipeline.targets):
            truth = pipeline.targets.targets[0].position
            direction = bearing(pipeline.codebook.center, pipeline.scene, truth)
            shift = peak_shift(image, truth, direction)
        record = metrics.to_record()
        return ImageMetricsReport(
            scenario_hash=scenario_hash(pipeline.scenario), tag=tag,
            peak_position_m=record['peak_position_m'], peak_value=record['peak_value'],
            width_x_m=record['width_x_m'], width_y_m=record['width_y_m'],
            islr=record['islr'], islr_db=record['islr_db'],
            highest_sidelobe_db=record['highest_sidelobe_db'],
            mainlobe_region_m=record['mainlobe_region_m'], peak_shift=shift)

    def wavenumber_coverage(self, pipeline: Pipeline) -> WavenumberCoverage:
        """Wavenumber coverage at the first target (ROI centre without targets)"""
        scene, plane, codebook = pipeline.scene, pipeline.plane, pipeline.codebook
        truth = (pipeline.targets.targets[0].position if len(pipeline.targets)
                 else scene.roi_center)
        sweeps = pipeline.scenario.sweeps
        sets = footprint_sets(scene, pipeline.source, plane, codebook, sweeps, pipeline.offsets,
                              self.config.simulation.footprint_mode)
        if plane.mode == "mirror":
            angles = np.tile(codebook.angles, sweeps)
            specular = [specular_subset(plane, atoms, theta, truth)
                        for atoms, theta in zip(sets, angles)]
            specular = [atoms for atoms in specular if len(atoms)]
            if specular:
                sets = specular
            else:
                logger.warning("No atom reflects specularly toward the target; "
                               "using the full footprints")
        return coverage(truth, sets, pipeline.source.bandwidth, pipeline.source.carrier,
                        source=(scene.source_x0, scene.source_height))

    def distance_factors(self, scenario: Scenario) -> List[Dict[str, float]]:
        """Per-snapshot first-order distance factors at the first target"""
        pipeline = self.prepare(scenario)
        truth = (pipeline.targets.targets[0].position if len(pipeline.targets)
                 else pipeline.scene.roi_center)
        return distance_factor_table(pipeline.scene, pipeline.codebook, truth)

    def run(self, scenario: Scenario, tag: Optional[str] = None):
        pipeline, _ = self.design(scenario)
        cube, _ = self.simulate(pipeline)
        return self.image(pipeline, cube, tag=tag or scenario.plane.mode)

    def study(self, scenario: Scenario, name: str,
              values: Optional[Sequence[Any]] = None) -> StudyReport:
        """Parameter sweep; failed points are recorded and the study continues"""
        if name not in STUDIES:
            raise ValueError(f"Unknown study: {name}")
        start_time = time.time()
        handler: Callable = getattr(self, '_study_' + name.replace('-', '_'))
        rows: List[StudyRow] = []
        errors: List[dict] = []
        points = handler(scenario, values)

        for index, (point, compute) in enumerate(points):
            try:
                rows.append(StudyRow(point=point, metrics=compute()))
            except (NlosError, ValueError) as e:
                logger.warning(f"Study {name} point {point} failed: {e}")
                errors.append({'index': index, 'point': point, 'error': str(e),
                               'type': type(e).__name__})

        processing_time = (time.time() - start_time) * 1000
        logger.info(f"Study {name}: {len(rows)} points succeeded, {len(errors)} failed "
                    f"in {processing_time:.1f}ms")
        return StudyReport(study=name, scenario_hash=scenario_hash(scenario),
                           success_count=len(rows), failed_count=len(errors),
                           total_count=len(rows) + len(errors), rows=rows, errors=errors,
                           processing_time_ms=processing_time)

    def _variant(self, scenario: Scenario, overrides: Sequence[str]) -> Scenario:
        return Scenario.model_validate(apply_overrides(scenario.model_dump(mode='json'), overrides))

    def _metrics_point(self, scenario: Scenario, tag: str) -> Dict[str, Any]:
        pipeline, design = self.design(scenario)
        cube, _ = self.simulate(pipeline)
        _, report = self.image(pipeline, cube, tag=tag)
        result = {
            'islr_db': report.islr_db,
            'width_x_m': report.width_x_m,
            'width_y_m': report.width_y_m,
            'highest_sidelobe_db': report.highest_sidelobe_db,
            'module_size': design.module_size,
            'module_size_max': design.module_size_max,
        }
        if report.peak_shift:
            result['peak_shift_m'] = float(np.hypot(report.peak_shift['dx'], report.peak_shift['dy']))
            result['range_shift_m'] = report.peak_shift['range']
            result['cross_range_shift_m'] = report.peak_shift['cross_range']
        return result

    def _study_sweep_convergence(self, scenario: Scenario, values):
        counts = [int(v) for v in (values or [1, 2, 4, 8, 16])]
        total = max(counts)
        variant = self._variant(scenario, [f'sweeps={total}', 'plane.gamma_policy=random'])
        cache: Dict[str, Any] = {}

        def images():
            if 'images' not in cache:
                pipeline, _ = self.design(variant)
                cube, _ = self.simulate(pipeline)
                grid = self.grid(pipeline)
                cache['images'] = backproject_sweeps(cube, pipeline.scene, pipeline.plane,
                                                     pipeline.source, grid, threads=self.threads)
                lens = self._variant(scenario, ['plane.mode=lens', 'sweeps=1'])
                _, floor = self.run(lens, tag='baseline')
                cache['floor_db'] = floor.islr_db
                cache['region'] = tuple(floor.mainlobe_region_m)
            return cache

        def point(count: int):
            def compute():
                state = images()
                combined = combine_sweeps(state['images'][:count])
                value = islr(combined, state['region'])
                return {'islr_db': float(10 * np.log10(value)), 'floor_db': state['floor_db']}
            return compute

        return [({'sweeps': count}, point(count)) for count in counts]

    def _study_module_size(self, scenario: Scenario, values):
        counts = [int(v) for v in (values or [3, 5, 9, 13, 21])]
        return [({'reflection_angles': k},
                 lambda k=k: self._metrics_point(
                     self._variant(scenario, [f'plane.reflection_angles={k}']), 'module-size'))
                for k in counts]

    def _study_periodicity(self, scenario: Scenario, values):
        divisors = [float(v) for v in (values or [1, 2, 4])]
        return [({'periodicity_divisor': p},
                 lambda p=p: self._metrics_point(
                     self._variant(scenario, ['plane.period_m=null',
                                              f'plane.periodicity_divisor={p}']), 'periodicity'))
                for p in divisors]

    def _study_near_field(self, scenario: Scenario, values):
        distances = [float(v) for v in (values or [20, 15, 10, 5])]

        def compute(r_y: float):
            cx = scenario.scene.roi_center_m[0]
            variant = self._variant(scenario, [
                f'scene.roi_center_m=[{cx}, {r_y}]',
                f'targets=[{{position_m: [{cx}, {r_y}], rcs_m2: 1.0}}]'])
            result = self._metrics_point(variant, 'near-field')
            pipeline, _ = self.design(variant)
            record = self.wavenumber_coverage(pipeline).to_record()
            result.update({'extent_ky_rad_per_m': record['extent_y_rad_per_m'],
                           'bound_x_m': record['resolution_x_m'],
                           'bound_y_m': record['resolution_y_m'],
                           'occupancy': record['occupancy']})
            return result

        return [({'r_y_m': r}, lambda r=r: compute(r)) for r in distances]

    def _study_gamma(self, scenario: Scenario, values):
        draws = int(values[0]) if values else 8

        def compute():
            pipeline = self.prepare(scenario)
            gammas = draw_gammas(scenario.seed, draws)
            offsets = gamma_offsets(gammas, pipeline.period)
            request = scenario.plane
            plane = build_plane(pipeline.scene, pipeline.source, pipeline.codebook,
                                pipeline.period, request.reflection_angles, mode=request.mode,
                                sweeps=draws, offsets=offsets, quantizer=request.quantizer,
                                profile=request.profile)
            result = random_illumination_study(pipeline.scene, pipeline.source, plane,
                                               pipeline.codebook, pipeline.targets, gammas,
                                               self.grid(pipeline), threads=self.threads)
            return {
                'draws': draws,
                'peak_spread': result['peak_spread'],
                'islr_spread': result['islr_spread'],
                'combined_islr_db': float(10 * np.log10(result['combined_metrics'].islr)),
            }

        return [({'draws': draws}, compute)]

    def _study_aliasing(self, scenario: Scenario, values):
        factors = [float(v) for v in (values or [1, 4])]
        pipeline = self.prepare(scenario)
        limit = np.degrees(pipeline.codebook.limit)
        threshold = self.config.imaging.sidelobe_threshold_db

        def compute(factor: float):
            variant = self._variant(scenario, [f'codebook.step_deg={factor * limit}',
                                               'codebook.allow_aliasing=true'])
            pipe, _ = self.design(variant)
            cube, _ = self.simulate(pipe)
            image, report = self.image(pipe, cube, tag='aliasing')
            lobes = secondary_lobes(image, threshold, tuple(report.mainlobe_region_m),
                                    self.config.imaging.local_max_size)
            return {'secondary_lobes': len(lobes), 'islr_db': report.islr_db,
                    'tx_angles': pipe.codebook.size}

        return [({'step_factor': f}, lambda f=f: compute(f)) for f in factors]

    def _study_perturbation(self, scenario: Scenario, values):
        wavelength = scenario.wavelength
        multiples = [float(v) for v in (values or [0, 5, 10, 20])]

        def compute(multiple: float):
            epsilon_mm = multiple * wavelength * 1e3
            variant = self._variant(scenario, [f'perturbation.epsilon_mm={epsilon_mm}'])
            result = self._metrics_point(variant, 'perturbation')
            pipeline = self.prepare(variant)
            truth = pipeline.targets.targets[0].position if len(pipeline.targets) \
                else pipeline.scene.roi_center
            f_i, f_o = taylor_distance_factors(pipeline.scene, pipeline.codebook.center, truth)
            result['predicted_range_shift_m'] = (f_i + f_o) * epsilon_mm * 1e-3
            result['range_cell_m'] = SPEED_OF_LIGHT / (2 * pipeline.source.bandwidth)

            profile = distance_error_profile(pipeline.scene, pipeline.codebook,
                                             pipeline.perturbation, truth)
            result['exact_mean_error_m'] = float(np.mean(profile['exact_errors_m']))
            result['first_order_mean_error_m'] = float(np.mean(profile['errors_m']))
            result['published_mean_error_m'] = float(np.mean(profile['published_errors_m']))
            result['error_linear_deviation_m'] = profile['linear_deviation_m']

            weights = predicted_degraded_image(pipeline.scene, pipeline.source, pipeline.codebook,
                                               pipeline.perturbation, truth)
            ideal = predicted_degraded_image(pipeline.scene, pipeline.source, pipeline.codebook,
                                             PerturbationSpec(), truth)
            result['predicted_peak_ratio'] = float(abs(weights.sum()) / abs(ideal.sum()))
            return result

        return [({'epsilon_lambda': m}, lambda m=m: compute(m)) for m in multiples]
