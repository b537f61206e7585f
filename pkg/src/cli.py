"""Command-line driver: design, simulate, image and study subcommands."""

import argparse
import json
import logging
import os
import sys
import time
from typing import Any, Dict, List, Optional, Sequence

import yaml
from pydantic import ValidationError

from .exceptions import (DesignError, GeometryError, IlluminationError, MetricError, NlosError,
                         NumericError, ScenarioError)
from .models import Scenario, apply_overrides, load_scenario_data, scenario_hash
from .service import STUDIES, ImagingService, Pipeline
from .storage import (ensure_dir, load_cube, load_image, load_plane, save_cube, save_image,
                      save_plane, write_coverage_csv, write_image_csv, write_pgm, write_report,
                      write_table)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_VALIDATION = 2
EXIT_DESIGN = 3
EXIT_NUMERIC = 4


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, (ValidationError, ScenarioError, GeometryError)):
        return EXIT_VALIDATION
    if isinstance(error, DesignError):
        return EXIT_DESIGN
    if isinstance(error, (NumericError, IlluminationError, MetricError)):
        return EXIT_NUMERIC
    return EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--scenario', help='Scenario YAML file')
    common.add_argument('--paper-defaults', '--reference-defaults', dest='paper_defaults',
                        action='store_true', help='Start from the reference parameter set')
    common.add_argument('--out', default='output', help='Output directory (default: output)')
    common.add_argument('--seed', type=int, help='Override the scenario seed')
    common.add_argument('--threads', type=int, help='Worker threads (speed only, never results)')
    common.add_argument('--override', action='append', default=[], metavar='KEY=VALUE',
                        help='Dotted scenario override, e.g. plane.reflection_angles=9')

    parser = argparse.ArgumentParser(
        prog='nlos-strobe',
        description='Stroboscopic NLOS radar imaging through a static reflection plane',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py design --paper-defaults --out runs/ref
  python main.py simulate --scenario scenarios/reference.yaml --out runs/ref
  python main.py image --paper-defaults --override plane.mode=lens --out runs/lens
  python main.py study --paper-defaults --study near-field --out runs/near
        """)
    commands = parser.add_subparsers(dest='command', required=True)

    commands.add_parser('design', parents=[common], help='Design the reflection plane')

    simulate = commands.add_parser('simulate', parents=[common], help='Synthesize the echo cube')
    simulate.add_argument('--plane', help='Plane file from a previous design run')

    image = commands.add_parser('image', parents=[common], help='Back-project and measure')
    image.add_argument('--plane', help='Plane file from a previous design run')
    image.add_argument('--cube', help='Echo cube file from a previous simulate run')
    image.add_argument('--image', help='Measure a previously saved image instead of imaging')
    image.add_argument('--assume', action='append', default=[], metavar='KEY=VALUE',
                       help='Override of the geometry assumed by the imager, e.g. '
                            'scene.source_height_m=5.04')

    study = commands.add_parser('study', parents=[common], help='Run a parameter study')
    study.add_argument('--study', required=True, choices=STUDIES)
    study.add_argument('--values', nargs='+', help='Study points (defaults per study)')
    return parser


def load_scenario(args: argparse.Namespace) -> Scenario:
    if not args.scenario and not args.paper_defaults:
        raise ScenarioError("Give --scenario or --paper-defaults")
    data = load_scenario_data(args.scenario, args.paper_defaults)
    data = apply_overrides(data, args.override)
    if args.seed is not None:
        data['seed'] = args.seed
    return Scenario.model_validate(data)


def _dump(report: Any) -> Dict[str, Any]:
    return report.model_dump(mode='json')


def _pipeline(service: ImagingService, scenario: Scenario, plane_path: Optional[str],
              out: str) -> Pipeline:
    if plane_path:
        return service.with_plane(scenario, load_plane(plane_path))
    pipeline, report = service.design(scenario)
    save_plane(os.path.join(out, 'plane.bin'), pipeline.plane, scenario_hash(scenario))
    write_report(os.path.join(out, 'design_report.yaml'), _dump(report))
    return pipeline


def cmd_design(args: argparse.Namespace, service: ImagingService) -> Dict[str, Any]:
    scenario = load_scenario(args)
    out = ensure_dir(args.out)
    pipeline, report = service.design(scenario)
    save_plane(os.path.join(out, 'plane.bin'), pipeline.plane, report.scenario_hash)
    write_report(os.path.join(out, 'design_report.yaml'), _dump(report))
    record = pipeline.codebook.to_record()
    record['scenario_hash'] = report.scenario_hash
    write_report(os.path.join(out, 'codebook.yaml'), record)
    write_coverage_csv(os.path.join(out, 'coverage.csv'), service.wavenumber_coverage(pipeline),
                       report.scenario_hash)
    for warning in report.warnings:
        logger.warning(warning)
    return {'plane': os.path.join(out, 'plane.bin'),
            'module_width_m': report.module_width_m,
            'reflection_angles': len(report.reflection_angles_deg)}


def cmd_simulate(args: argparse.Namespace, service: ImagingService) -> Dict[str, Any]:
    scenario = load_scenario(args)
    out = ensure_dir(args.out)
    start_time = time.time()
    pipeline = _pipeline(service, scenario, args.plane, out)
    cube, manifest = service.simulate(pipeline)
    cube_path = os.path.join(out, 'cube.bin')
    save_cube(cube_path, cube, manifest.scenario_hash)
    manifest.files = {'cube': cube_path}
    manifest.timings_ms['total'] = (time.time() - start_time) * 1000
    write_report(os.path.join(out, 'manifest.yaml'), _dump(manifest))
    return {'cube': cube_path, 'snapshots': cube.snapshots}


def _assumed_scene(scenario: Scenario, assume: Sequence[str]):
    if not assume:
        return None
    data = apply_overrides(scenario.model_dump(mode='json'), assume)
    return Scenario.model_validate(data).to_scene()


def _image_tag(scenario: Scenario) -> str:
    return {'lens': 'baseline', 'mirror': 'mirror'}.get(scenario.plane.mode, 'stroboscopic')


def cmd_image(args: argparse.Namespace, service: ImagingService) -> Dict[str, Any]:
    scenario = load_scenario(args)
    out = ensure_dir(args.out)
    pipeline = _pipeline(service, scenario, args.plane, out)
    tag = _image_tag(scenario)
    if args.image:
        image = load_image(args.image)
        report = service.measure(pipeline, image, tag)
        write_report(os.path.join(out, 'metrics.yaml'), _dump(report))
        return {'image': args.image, 'tag': report.tag, 'width_x_m': report.width_x_m,
                'width_y_m': report.width_y_m, 'islr_db': report.islr_db}

    if args.cube:
        cube = load_cube(args.cube)
        if cube.sweep_length != pipeline.codebook.size:
            raise ScenarioError(f"Cube has {cube.sweep_length} snapshots per sweep, scenario "
                                f"codebook has {pipeline.codebook.size}")
    else:
        cube, _ = service.simulate(pipeline)

    image, report = service.image(pipeline, cube, _assumed_scene(scenario, args.assume), tag=tag)
    output = service.config.output
    digest = report.scenario_hash
    save_image(os.path.join(out, 'image.bin'), image, digest)
    if output.write_csv:
        write_image_csv(os.path.join(out, 'image.csv'), image, digest)
        write_coverage_csv(os.path.join(out, 'coverage.csv'),
                           service.wavenumber_coverage(pipeline), digest)
    if output.write_pgm:
        write_pgm(os.path.join(out, 'image.pgm'), image, output.pgm_dynamic_range_db, digest)
    write_report(os.path.join(out, 'metrics.yaml'), _dump(report))
    return {'image': os.path.join(out, 'image.bin'), 'tag': report.tag,
            'width_x_m': report.width_x_m, 'width_y_m': report.width_y_m,
            'islr_db': report.islr_db}


def cmd_study(args: argparse.Namespace, service: ImagingService) -> Dict[str, Any]:
    scenario = load_scenario(args)
    out = ensure_dir(args.out)
    values = [yaml.safe_load(v) for v in args.values] if args.values else None
    report = service.study(scenario, args.study, values)
    rows: List[Dict[str, Any]] = [{**row.point, **row.metrics} for row in report.rows]
    write_table(os.path.join(out, f'study_{args.study}.tsv'), rows, report.scenario_hash)
    if args.study == 'perturbation':
        write_table(os.path.join(out, 'study_perturbation_distance_factors.tsv'),
                    service.distance_factors(scenario), report.scenario_hash)
    write_report(os.path.join(out, f'study_{args.study}.yaml'), _dump(report))
    return {'study': args.study, 'success_count': report.success_count,
            'failed_count': report.failed_count}


COMMANDS = {
    'design': cmd_design,
    'simulate': cmd_simulate,
    'image': cmd_image,
    'study': cmd_study,
}


def _report_failure(error: BaseException, out: Optional[str]) -> int:
    code = exit_code_for(error)
    payload = {'error': type(error).__name__, 'message': str(error), 'exit_code': code}
    print(json.dumps(payload), file=sys.stderr)
    if out:
        try:
            write_report(os.path.join(ensure_dir(out), 'error.yaml'), payload)
        except OSError as e:
            logger.error(f"Could not write error report: {e}")
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        service = ImagingService(threads=args.threads)
        result = COMMANDS[args.command](args, service)
    except (NlosError, ValidationError, ValueError) as e:
        logger.error(f"{args.command} failed: {e}")
        return _report_failure(e, args.out)
    print(json.dumps(result))
    return EXIT_OK
