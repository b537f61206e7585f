import numpy as np
import pytest

from src.codebook import (SourceConfig, angular_sampling_limit, build_codebook,
                          effective_aperture, footprint_count, illuminated_set,
                          narrowband_check, narrowband_margin, source_beamwidth)
from src.config import get_config
from src.exceptions import GeometryError, ScenarioError


def test_source_beamwidth_widens_off_broadside(source):
    """Test the beamwidth is lambda/A at broadside and doubles at 60 deg"""
    assert source_beamwidth(source, 0.0) == pytest.approx(np.radians(0.5))
    assert source_beamwidth(source, np.radians(60.0)) == pytest.approx(np.radians(1.0))
    with pytest.raises(GeometryError):
        source_beamwidth(source, np.pi / 2)


def test_source_validation(scene):
    """Test inconsistent sources are rejected"""
    with pytest.raises(ScenarioError):
        SourceConfig(carrier=1e9, bandwidth=2e9, aperture=0.5, pulse_duration=1e-6)
    with pytest.raises(ScenarioError):
        SourceConfig(carrier=77e9, bandwidth=5e8, aperture=-0.5, pulse_duration=1e-6)
    long_pulse = SourceConfig(carrier=77e9, bandwidth=5e8, aperture=0.5, pulse_duration=1e-4)
    with pytest.raises(ScenarioError):
        long_pulse.check_against(scene)


def test_footprint_count_reference(scene, source):
    """Test about 46 atoms are lit at 40 deg with lambda/2 pitch"""
    pitch = source.wavelength / 2
    closed = footprint_count(source, scene, np.radians(40.0), pitch, mode="closed_form")
    assert 45 <= closed <= 46
    assert footprint_count(source, scene, np.radians(40.0), pitch) <= closed


def test_footprint_count_broadside(scene, source):
    """Test the closed form is singular at broadside while the cone count is finite"""
    pitch = source.wavelength / 2
    with pytest.raises(GeometryError):
        footprint_count(source, scene, 0.0, pitch, mode="closed_form")
    assert footprint_count(source, scene, 0.0, pitch) == 22


def test_angular_sampling_limit(scene, source):
    """Test the corner-based step bounds for the reference ROI"""
    center, span = np.radians(40.0), np.radians(5.0)
    every_corner = angular_sampling_limit(scene, source, center, span, corner_mode="all")
    diagonal = angular_sampling_limit(scene, source, center, span, corner_mode="diagonal")
    assert every_corner == pytest.approx(6.8e-4, rel=0.1)
    assert diagonal == pytest.approx(1.28e-3, rel=0.1)
    assert every_corner < diagonal


def test_build_codebook_uniform_grid(codebook):
    """Test the default codebook is uniform, compliant and inside the span"""
    assert codebook.compliant
    assert codebook.step == pytest.approx(codebook.limit)
    assert codebook.angles[0] == pytest.approx(np.radians(37.5))
    assert codebook.angles[-1] <= np.radians(42.5) + 1e-12
    assert np.allclose(np.diff(codebook.angles), codebook.step)
    assert codebook.size > 100


def test_step_override_is_clipped_unless_aliasing_allowed(scene, source, codebook):
    """Test an oversized step is clipped, or kept and flagged"""
    center, span = np.radians(40.0), np.radians(5.0)
    clipped = build_codebook(scene, source, center, span, override_step=2 * codebook.limit)
    assert clipped.step == pytest.approx(codebook.limit)
    assert clipped.compliant

    aliased = build_codebook(scene, source, center, span, override_step=2 * codebook.limit,
                             allow_aliasing=True)
    assert aliased.step == pytest.approx(2 * codebook.limit)
    assert not aliased.compliant
    assert aliased.size < codebook.size


def test_sixty_angles_take_three_milliseconds(scene, source):
    """Test 60 snapshots at 50 us PRI last 3 ms and move the source 6 cm"""
    span = np.radians(5.0)
    book = build_codebook(scene, source, np.radians(40.0), span, override_step=span / 59,
                          allow_aliasing=True)
    assert book.size == 60
    assert book.observation_time(scene.pri) == pytest.approx(3e-3)
    assert book.size * scene.step == pytest.approx(0.06)


def test_single_angle_codebooks(scene, source):
    """Test zero span and step > span both give one angle"""
    zero = build_codebook(scene, source, np.radians(40.0), 0.0)
    assert zero.size == 1
    assert zero.angles[0] == pytest.approx(np.radians(40.0))

    narrow = build_codebook(scene, source, np.radians(40.0), 1e-5, override_step=1e-4,
                            allow_aliasing=True)
    assert narrow.size == 1


def test_negative_span_rejected(scene, source):
    with pytest.raises(ScenarioError):
        build_codebook(scene, source, np.radians(40.0), -0.1)


def test_effective_aperture(scene):
    """Test the beam centre sweeps about 0.745 m of the plane"""
    assert effective_aperture(scene, np.radians(40.0), np.radians(5.0)) == pytest.approx(
        0.745, abs=2e-3)


def test_narrowband_margin_examples():
    """Test 1 deg at 60 deg from 10 m: 90 MHz is comfortably narrowband, 0.95 GHz marginally"""
    theta = np.radians(60.0)
    footprint = 10.0 * np.radians(1.0) / np.cos(theta)
    assert footprint == pytest.approx(0.349, abs=1e-3)
    assert narrowband_margin(90e6, footprint, theta, theta) >= 10
    assert narrowband_margin(0.95e9, footprint, theta, theta) >= 1

    wide = 10.0 * np.radians(10.0) / np.cos(theta)
    assert narrowband_margin(500e6, wide, theta, theta) < 1


def test_narrowband_check_reports_every_snapshot(scene, source, plane, codebook):
    """Test one positive margin per snapshot"""
    report = narrowband_check(source, scene, plane, codebook, plane.theta_o_bar)
    assert report.margins.shape == (codebook.size,)
    assert np.all(report.margins > 0)


def test_reference_passes_shipped_narrowband_factor(scene, source, plane, codebook):
    """Test the reference sweep clears the configured dominance factor of 10 at every snapshot"""
    factor = get_config().simulation.narrowband_factor
    assert factor == 10.0
    report = narrowband_check(source, scene, plane, codebook, plane.theta_o_bar, factor)
    assert report.factor == factor
    assert report.passed is True
    assert np.all(report.margins >= factor)
    # closest at the steepest incidence, where 45 atoms are lit
    assert report.margins.min() < 1.1 * factor

    strict = narrowband_check(source, scene, plane, codebook, plane.theta_o_bar, 20.0)
    assert strict.passed is False


def test_illuminated_set_is_contiguous(scene, source, plane, codebook):
    """Test the footprint is a contiguous run of plane atoms around the intercept"""
    lit = illuminated_set(source, scene, plane, codebook.angles[10], ell=10)
    assert np.all(np.diff(lit.indices) == 1)
    assert lit.indices.size == lit.count
    centre = plane.positions[lit.indices].mean()
    p0 = 10 * scene.step + scene.source_height * np.tan(codebook.angles[10])
    assert abs(centre - p0) <= plane.atom_pitch
