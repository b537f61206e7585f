"""File exports: YAML header + little-endian binary payload, CSV and PGM views."""

import logging
import os
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
import yaml

from .imaging import ImageGrid
from .plane import PlaneDesign
from .signal import EchoCube
from .tomography import WavenumberCoverage, coverage_csv_rows

logger = logging.getLogger(__name__)

END_OF_HEADER = b"\n...\n"
PLANE_DTYPE = '<f8'
COMPLEX_DTYPE = '<c8'


def write_blob(path: str, kind: str, header: Dict[str, Any], payload: np.ndarray,
               dtype: str, scenario_hash: Optional[str] = None) -> None:
    """Write a YAML header, the document-end marker and the raw payload"""
    data = np.ascontiguousarray(payload, dtype=np.dtype(dtype)).tobytes()
    document = {
        'kind': kind,
        'scenario_hash': scenario_hash,
        'dtype': dtype,
        'payload_bytes': len(data),
        **header,
    }
    text = yaml.safe_dump(document, default_flow_style=False, allow_unicode=True, sort_keys=True)
    with open(path, 'wb') as file:
        file.write(text.rstrip('\n').encode('utf-8'))
        file.write(END_OF_HEADER)
        file.write(data)
    logger.debug(f"Wrote {kind} to {path} ({len(data)} payload bytes)")


def read_blob(path: str, kind: Optional[str] = None) -> Tuple[Dict[str, Any], np.ndarray]:
    with open(path, 'rb') as file:
        raw = file.read()
    split = raw.find(END_OF_HEADER)
    if split < 0:
        raise ValueError(f"{path}: missing header terminator")
    header = yaml.safe_load(raw[:split].decode('utf-8'))
    payload = raw[split + len(END_OF_HEADER):]
    if len(payload) != header['payload_bytes']:
        raise ValueError(f"{path}: payload is {len(payload)} bytes, header declares "
                         f"{header['payload_bytes']}")
    if kind is not None and header.get('kind') != kind:
        raise ValueError(f"{path}: expected a {kind} file, found {header.get('kind')}")
    return header, np.frombuffer(payload, dtype=np.dtype(header['dtype']))


def save_plane(path: str, plane: PlaneDesign, scenario_hash: Optional[str] = None) -> None:
    write_blob(path, 'plane', plane.to_header(), plane.phases, PLANE_DTYPE, scenario_hash)


def load_plane(path: str) -> PlaneDesign:
    header, phases = read_blob(path, 'plane')
    return PlaneDesign.from_header(header, phases.astype(float))


def save_cube(path: str, cube: EchoCube, scenario_hash: Optional[str] = None) -> None:
    write_blob(path, 'cube', cube.to_header(), cube.data, COMPLEX_DTYPE, scenario_hash)


def load_cube(path: str) -> EchoCube:
    header, data = read_blob(path, 'cube')
    return EchoCube.from_header(header, data)


def save_image(path: str, image: ImageGrid, scenario_hash: Optional[str] = None) -> None:
    write_blob(path, 'image', image.to_header(), image.values, COMPLEX_DTYPE, scenario_hash)


def load_image(path: str) -> ImageGrid:
    header, values = read_blob(path, 'image')
    return ImageGrid.from_header(header, values)


def write_image_csv(path: str, image: ImageGrid, scenario_hash: Optional[str] = None) -> None:
    """Magnitude grid, one row per y (ascending), after a '# scenario_hash=' comment line"""
    np.savetxt(path, image.magnitude, delimiter=',', fmt='%.9e',
               header=f"scenario_hash={scenario_hash}", comments='# ')


def write_pgm(path: str, image: ImageGrid, dynamic_range_db: float = 40.0,
              scenario_hash: Optional[str] = None) -> None:
    """8-bit grayscale view in dB; the top row is the largest y"""
    magnitude = image.magnitude
    peak = magnitude.max()
    if peak > 0:
        with np.errstate(divide='ignore'):
            level = 20 * np.log10(magnitude / peak)
        level = np.clip(level, -dynamic_range_db, 0.0)
        pixels = np.round((level + dynamic_range_db) / dynamic_range_db * 255).astype(np.uint8)
    else:
        pixels = np.zeros(magnitude.shape, dtype=np.uint8)
    pixels = pixels[::-1, :]
    with open(path, 'wb') as file:
        file.write(f"P5\n# scenario_hash={scenario_hash}\n"
                   f"{pixels.shape[1]} {pixels.shape[0]}\n255\n".encode('ascii'))
        file.write(pixels.tobytes())


def write_coverage_csv(path: str, cov: WavenumberCoverage,
                       scenario_hash: Optional[str] = None) -> None:
    rows = np.array(coverage_csv_rows(cov)).reshape(-1, 2)
    header = f"# scenario_hash={scenario_hash}\nkx_rad_per_m,ky_rad_per_m"
    np.savetxt(path, rows, delimiter=',', header=header, comments='', fmt='%.9e')


def write_report(path: str, report: Dict[str, Any]) -> None:
    with open(path, 'w', encoding='utf-8') as file:
        yaml.safe_dump(report, file, default_flow_style=False, allow_unicode=True, sort_keys=False)


def write_table(path: str, rows: Sequence[Dict[str, Any]],
                scenario_hash: Optional[str] = None) -> None:
    """Tab-separated table with the union of row keys as columns"""
    columns = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    with open(path, 'w', encoding='utf-8') as file:
        file.write(f"# scenario_hash={scenario_hash}\n")
        file.write('\t'.join(columns) + '\n')
        for row in rows:
            file.write('\t'.join(str(row.get(key, '')) for key in columns) + '\n')


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
