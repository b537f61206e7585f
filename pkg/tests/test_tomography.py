import numpy as np
import pytest
from scipy.constants import c as SPEED_OF_LIGHT

from src import plane as plane_module
from src.plane import build_plane
from src.tomography import (WavenumberCoverage, coverage, coverage_csv_rows, focusing_phases,
                            footprint_sets, occupancy, pair_wavevector, resolution_bounds,
                            residual_phase_spread, specular_subset)

CARRIER = 77e9
BANDWIDTH = 500e6
WAVELENGTH = SPEED_OF_LIGHT / CARRIER


def test_pair_wavevector_broadside():
    """Test an atom straight below the target gives (0, 4 pi f / c)"""
    k = pair_wavevector((0.0, 0.0), (0.0, 0.0), (0.0, 5.0), CARRIER)
    assert k[0] == pytest.approx(0.0, abs=1e-9)
    assert k[1] == pytest.approx(4 * np.pi * CARRIER / SPEED_OF_LIGHT)


def test_mirrored_pair_cancels_cross_range():
    k = pair_wavevector((-1.0, 0.0), (1.0, 0.0), (0.0, 5.0), CARRIER)
    assert k[0] == pytest.approx(0.0, abs=1e-9)
    assert k[1] > 0
    with pytest.raises(ValueError):
        pair_wavevector((0.0, 5.0), (1.0, 0.0), (0.0, 5.0), CARRIER)


def test_single_atom_range_resolution():
    """Test one atom over the band resolves c/(2B) in range and nothing in cross-range"""
    cov = coverage((0.0, 5.0), [[(0.0, 0.0)]], BANDWIDTH, CARRIER, frequency_samples=16)
    assert cov.extent_x == pytest.approx(0.0, abs=1e-9)
    dx, dy = resolution_bounds(cov)
    assert dy == pytest.approx(SPEED_OF_LIGHT / (2 * BANDWIDTH), rel=1e-9)
    assert dx == float('inf')


def test_single_frequency_single_sample():
    cov = coverage((0.0, 5.0), [[(0.0, 0.0)]], BANDWIDTH, CARRIER, frequency_samples=1)
    assert cov.size == 1
    assert cov.extent_y == 0.0


def test_repeated_sets_add_nothing():
    """Test the coverage of a set taken twice equals the coverage of the set"""
    atoms = np.linspace(3.8, 4.0, 20)
    once = coverage((13.8, 11.0), [atoms], BANDWIDTH, CARRIER)
    twice = coverage((13.8, 11.0), [atoms, atoms], BANDWIDTH, CARRIER)
    assert np.array_equal(once.samples, twice.samples)
    assert once.extent_x == twice.extent_x
    assert once.extent_y == twice.extent_y


def test_disjoint_modules_widen_coverage():
    """Test the union of two separated sets covers at least each part"""
    first = np.linspace(3.8, 3.9, 20)
    second = np.linspace(4.5, 4.6, 20)
    target = (13.8, 11.0)
    a = coverage(target, [first], BANDWIDTH, CARRIER)
    b = coverage(target, [second], BANDWIDTH, CARRIER)
    union = coverage(target, [first, second], BANDWIDTH, CARRIER)
    assert union.extent_x >= max(a.extent_x, b.extent_x)
    assert union.extent_y >= max(a.extent_y, b.extent_y)
    assert union.extent_x > a.extent_x
    assert union.provenance['sets'] == 2


def test_bounds_halve_when_extents_double():
    samples = np.array([[0.0, 0.0], [1.0, 2.0]])
    narrow = WavenumberCoverage(samples=samples, extent_x=10.0, extent_y=20.0)
    wide = WavenumberCoverage(samples=samples, extent_x=20.0, extent_y=40.0)
    assert resolution_bounds(wide)[0] == pytest.approx(resolution_bounds(narrow)[0] / 2)
    assert resolution_bounds(wide)[1] == pytest.approx(resolution_bounds(narrow)[1] / 2)
    assert resolution_bounds(narrow)[0] == pytest.approx(2 * np.pi / 10.0)


def test_near_field_widens_cross_range_coverage():
    """Test a fixed aperture spans more wavenumbers as the target approaches"""
    atoms = np.linspace(3.8, 4.6, 50)
    extents = [coverage((4.2, ry), [atoms], BANDWIDTH, CARRIER).extent_x
               for ry in (20.0, 15.0, 10.0, 5.0)]
    assert np.all(np.diff(extents) > 0)


def test_focusing_residual():
    """Test the lens leaves no residual on design and several radians 5 cm off it"""
    atoms = np.linspace(3.84, 4.58, 383)
    source, target = (0.0, 5.0), (13.8, 11.0)
    phases = focusing_phases(source, target, atoms, WAVELENGTH)
    assert residual_phase_spread(source, target, atoms, phases, WAVELENGTH) < 1e-6
    assert residual_phase_spread(source, (13.85, 11.0), atoms, phases, WAVELENGTH) >= np.pi


def test_focusing_phases_agree_with_plane():
    atoms = np.linspace(3.84, 4.58, 50)
    assert np.allclose(focusing_phases((0.0, 5.0), (13.8, 11.0), atoms, WAVELENGTH),
                       plane_module.focusing_phases((0.0, 5.0), (13.8, 11.0), atoms, WAVELENGTH))


def test_occupancy_bounds():
    single = WavenumberCoverage(samples=np.array([[1.0, 2.0]]), extent_x=0.0, extent_y=0.0)
    assert occupancy(single) == 1.0
    cov = coverage((13.8, 11.0), [np.linspace(3.8, 4.6, 40)], BANDWIDTH, CARRIER)
    assert 0 < occupancy(cov) <= 1
    assert len(coverage_csv_rows(cov)) == cov.size


def test_footprint_sets_per_snapshot(scene, source, plane, codebook):
    """Test one non-empty ROI-frame atom set per snapshot"""
    sets = footprint_sets(scene, source, plane, codebook)
    assert len(sets) == codebook.size
    assert all(len(points) > 0 for points in sets)
    assert all(points.shape[1] == 2 for points in sets)


def test_specular_subset_on_flat_mirror(scene, source, codebook):
    """Test the specular atoms of a flat mirror sit where the 40 deg ray meets the target"""
    flat = build_plane(scene, source, codebook, 2.0, 13, mode="mirror", mirror_slope=0.0)
    atoms = np.column_stack([flat.positions, np.zeros(flat.atom_count)])
    subset = specular_subset(flat, atoms, np.radians(40.0), (13.8, 11.0), tolerance=0.01)
    specular_x = 13.8 - 11.0 * np.tan(np.radians(40.0))
    assert specular_x == pytest.approx(4.570, abs=1e-3)
    nearest = flat.positions[np.argmin(np.abs(flat.positions - specular_x))]
    assert np.any(np.isclose(subset[:, 0], nearest))
    assert np.all(np.abs(subset[:, 0] - specular_x) < 0.5)
