import numpy as np
import pytest
from scipy.constants import c as SPEED_OF_LIGHT

from src.codebook import build_codebook
from src.exceptions import DesignError, ScenarioError
from src.geometry import SceneGeometry, reflection_angle_to_target, roi_corners, snapshot_pose
from src.plane import (PlaneDesign, build_plane, continuous_reflection_offset,
                       design_reflection_span, dirichlet_pattern, focusing_phases,
                       module_angle_index, quantize_index, quantize_offset, reflection_pattern,
                       reflection_step_limit)

WAVELENGTH = SPEED_OF_LIGHT / 77e9


def _mirror(n_atoms, slope, theta_i):
    pitch = WAVELENGTH / 2
    return PlaneDesign(atom_pitch=pitch, atom_count=n_atoms, first_index=0, origin_x=0.0,
                       phases=np.mod(slope * np.arange(n_atoms), 2 * np.pi),
                       wavelength=WAVELENGTH, period=1.0, theta_i_bar=theta_i,
                       theta_o_bar=theta_i, span_o=0.0, angles_o=np.array([theta_i]), step_o=0.0,
                       module_size=n_atoms, gamma=0.0, mode="mirror", mirror_slope=slope)


def test_continuous_offset_extremes():
    """Test the periodic offset swings by half the span around its mean"""
    mean_i, mean_o, span = 0.7, 0.72, 0.01
    assert continuous_reflection_offset(0.0, 2.0, mean_i, mean_o, span) == pytest.approx(
        0.02 + 0.005)
    assert continuous_reflection_offset(1.0, 2.0, mean_i, mean_o, span) == pytest.approx(
        0.02 - 0.005)
    samples = continuous_reflection_offset(np.linspace(0, 2.0, 1000, endpoint=False), 2.0,
                                           mean_i, mean_o, span)
    assert samples.mean() == pytest.approx(0.02)
    with pytest.raises(ScenarioError):
        continuous_reflection_offset(0.0, 0.0, mean_i, mean_o, span)


def test_design_reflection_span_reference(scene):
    """Test the reference ROI is seen at about 41.13 deg and its corners span about 5.53 deg"""
    theta_o_bar, span = design_reflection_span(scene, np.radians(40.0))
    assert np.degrees(theta_o_bar) == pytest.approx(41.13, abs=0.02)
    assert np.degrees(span) == pytest.approx(5.53, abs=0.03)


def test_design_span_brackets_every_corner(scene):
    """Test every ROI corner is reached by an angle inside the design span"""
    theta_i = np.radians(40.0)
    theta_o_bar, span = design_reflection_span(scene, theta_i)
    corners = reflection_angle_to_target(theta_i, scene, roi_corners(scene))
    assert corners.max() - corners.min() == pytest.approx(span)
    assert corners.min() < theta_o_bar < corners.max()


def test_quantizer_ties_and_bounds():
    """Test nearest-entry quantization with ties going to the smaller entry"""
    grid = np.array([0.0, 1.0, 2.0])
    assert quantize_offset(0.5, grid) == 0.0
    assert quantize_offset(1.5, grid) == 1.0
    assert quantize_offset(1.6, grid) == 2.0
    assert quantize_offset(-5.0, grid) == 0.0
    assert quantize_offset(7.0, grid) == 2.0
    assert np.array_equal(quantize_offset(grid, grid), grid)

    values = np.random.default_rng(3).uniform(0.0, 2.0, 500)
    assert np.all(np.abs(quantize_offset(values, grid) - values) <= 0.5 + 1e-12)
    with pytest.raises(ValueError):
        quantize_index(0.3, [])


def test_reference_module_width(plane):
    """Test 13 reflection angles over a 2 m period give 7.7 cm modules"""
    assert plane.module_width == pytest.approx(2.0 / 26)
    assert abs(plane.module_width - 0.08) / 0.08 < 0.05
    assert len(plane.angles_o) == 13
    assert plane.module_size == 40


def test_every_angle_used_twice_per_period(plane):
    """Test the arc quantizer visits each reflection angle once per half period"""
    n = len(plane.angles_o)
    centres = (np.arange(2 * n) + 0.5) * plane.period / (2 * n)
    index = module_angle_index(centres, plane.period, 0.0, n,
                               plane.theta_o_bar - plane.theta_i_bar, plane.span_o,
                               plane.angles_o - plane.theta_i_bar, quantizer="arc")
    assert np.array_equal(np.bincount(index, minlength=n), np.full(n, 2))
    assert np.all(np.diff(index[:n]) < 0)


def test_plane_offsets_stay_in_codebook(plane):
    """Test every atom carries an offset from the reflection codebook"""
    assert set(np.unique(plane.angle_index)) == set(range(len(plane.angles_o)))
    allowed = plane.angles_o - plane.theta_i_bar
    assert np.all(np.isin(plane.offsets, allowed))
    assert np.all((plane.phases >= 0) & (plane.phases < 2 * np.pi))


def test_plane_is_periodic(plane):
    """Test the offset pattern repeats with the period"""
    centres = plane.origin_x + (np.arange(26) + 0.5) * plane.period / 26
    assert np.array_equal(plane.offset_at(centres), plane.offset_at(centres + plane.period))
    assert np.array_equal(plane.offset_at(centres), plane.offset_at(centres + 3 * plane.period))


def test_plane_covers_every_footprint(scene, source, plane, codebook):
    """Test the atom range spans all beam intercepts of the sweep"""
    for ell in (0, codebook.size - 1):
        pose = snapshot_pose(scene, ell)
        p0 = pose.source_x + pose.source_y * np.tan(codebook.angles[ell])
        assert plane.positions[0] < p0 < plane.positions[-1]


def test_step_limit_doubles_when_period_halves(plane):
    """Test halving the module size doubles the reflection step bound"""
    full = reflection_step_limit(WAVELENGTH, WAVELENGTH / 2, 2.0, 13, plane.angles_o, plane.span_o)
    half = reflection_step_limit(WAVELENGTH, WAVELENGTH / 2, 1.0, 13, plane.angles_o, plane.span_o)
    assert half.step_limit == pytest.approx(2 * full.step_limit)
    assert half.module_size == pytest.approx(full.module_size / 2)


def test_step_limit_infeasible():
    """Test a design needing sub-atom modules is rejected"""
    with pytest.raises(DesignError):
        reflection_step_limit(WAVELENGTH, WAVELENGTH / 2, 0.001, 13, [0.5], 1.0)


def test_dirichlet_matches_direct_sum():
    """Test the closed-form module pattern against the explicit array sum"""
    n, slope, theta_i = 40, 0.3, np.radians(40.0)
    mirror = _mirror(n, slope, theta_i)
    theta_ref = np.arcsin(np.sin(theta_i) - slope / (mirror.wavenumber * mirror.atom_pitch))
    query = np.linspace(theta_ref - 0.3, theta_ref + 0.3, 601)

    direct = np.abs(reflection_pattern(mirror, np.arange(n), query, theta_i))
    closed = np.abs(dirichlet_pattern(mirror.atom_pitch, WAVELENGTH, n, theta_ref, query))
    assert np.allclose(direct, closed, atol=1e-9 * n)
    assert np.abs(reflection_pattern(mirror, np.arange(n), theta_ref, theta_i))[0] == \
        pytest.approx(n)
    assert dirichlet_pattern(mirror.atom_pitch, WAVELENGTH, n, theta_ref, theta_ref) == \
        pytest.approx(n)


def test_module_beam_points_at_its_angle(plane):
    """Test a single module steers its beam to its reflection angle"""
    mid = len(plane.angles_o) // 2
    members = np.nonzero(plane.angle_index == mid)[0]
    runs = np.split(members, np.nonzero(np.diff(members) > 1)[0] + 1)
    run = max(runs, key=len)

    query = plane.angles_o[mid] + np.linspace(-0.01, 0.01, 2001)
    pattern = np.abs(reflection_pattern(plane, run, query, plane.theta_i_bar))
    peak = query[np.argmax(pattern)]
    assert abs(peak - plane.angles_o[mid]) <= plane.step_o / 4


def test_adjacent_beams_cross_above_half_power(plane):
    """Test neighbouring reflection beams overlap above -3 dB"""
    a, b = plane.angles_o[0], plane.angles_o[1]
    value = dirichlet_pattern(plane.atom_pitch, plane.wavelength, plane.module_size, a,
                              (a + b) / 2)
    assert abs(value) / plane.module_size >= 1 / np.sqrt(2)


def test_mirror_modes(scene, source, codebook):
    """Test a zero-slope mirror is specular and the default slope steers to the ROI"""
    flat = build_plane(scene, source, codebook, 2.0, 13, mode="mirror", mirror_slope=0.0)
    assert np.all(flat.phases == 0.0)
    x = flat.positions[::200]
    assert np.allclose(flat.local_reflection_angle(np.radians(40.0), x), np.radians(40.0))

    steered = build_plane(scene, source, codebook, 2.0, 13, mode="mirror")
    angles = steered.local_reflection_angle(steered.theta_i_bar, steered.positions[::200])
    assert np.allclose(angles, steered.theta_o_bar, atol=1e-9)


def test_lens_residual_is_constant(lens_plane):
    """Test the lens cancels the round-trip phase at its design point"""
    k0 = lens_plane.wavenumber
    x = lens_plane.positions
    sx, sy = lens_plane.lens_source
    rx, ry = lens_plane.lens_target
    path = np.hypot(x - sx, sy) + np.hypot(rx - x, ry)
    residual = np.angle(np.exp(1j * (2 * k0 * path - 2 * lens_plane.phases)))
    assert np.allclose(residual, 0.0, atol=1e-6)
    assert np.allclose(lens_plane.phases,
                       focusing_phases(lens_plane.lens_source, lens_plane.lens_target, x,
                                       WAVELENGTH))


def test_lens_focuses_at_mid_sweep(scene, codebook, lens_plane):
    """Test the lens source is the mid-sweep source position"""
    middle = snapshot_pose(scene, (codebook.size - 1) / 2)
    assert lens_plane.lens_source[0] == pytest.approx(middle.source_x)
    assert lens_plane.lens_target[0] == pytest.approx(scene.roi_center[0] + middle.shift_x)


def test_unreachable_roi_rejected(source):
    """Test an ROI needing more than lambda/(2d) of anomalous steering fails the design"""
    scene = SceneGeometry(5.0, 0.0, 20.0, 50e-6, (-10.0, 5.0), (1.0, 1.0))
    book = build_codebook(scene, source, np.radians(40.0), np.radians(5.0))
    with pytest.raises(DesignError):
        build_plane(scene, source, book, 2.0, 13)


def test_degenerate_roi_uses_single_angle(source):
    """Test a point ROI collapses the reflection codebook to one angle"""
    scene = SceneGeometry(5.0, 0.0, 20.0, 50e-6, (13.8, 11.0), (0.0, 0.0))
    book = build_codebook(scene, source, np.radians(40.0), np.radians(5.0))
    design = build_plane(scene, source, book, 2.0, 13)
    assert len(design.angles_o) == 1
    assert design.span_o == 0.0
    assert np.all(design.angle_index == 0)


def test_unknown_mode_rejected(scene, source, codebook):
    with pytest.raises(ScenarioError):
        build_plane(scene, source, codebook, 2.0, 13, mode="hologram")
    with pytest.raises(ScenarioError):
        build_plane(scene, source, codebook, -1.0, 13)


def test_header_rebuild_recovers_quantization(plane):
    """Test a plane rebuilt from its header has the same angle assignment"""
    rebuilt = PlaneDesign.from_header(plane.to_header(), plane.phases)
    assert np.array_equal(rebuilt.angle_index, plane.angle_index)
    assert np.array_equal(rebuilt.positions, plane.positions)
    assert rebuilt.module_width == plane.module_width


def test_cosine_quantizer_tracks_continuous_offset(plane):
    """Test every atom's offset is the codebook entry nearest the periodic cosine law"""
    assert plane.quantizer == "cosine"
    ideal = continuous_reflection_offset(plane.local_positions, plane.period, plane.theta_i_bar,
                                         plane.theta_o_bar, plane.span_o, plane.gamma)
    assert np.all(np.abs(plane.offsets - ideal) <= plane.step_o / 2 + 1e-12)


def _longest_run(plane, index):
    members = np.nonzero(plane.angle_index == index)[0]
    return max(len(run) for run in np.split(members, np.nonzero(np.diff(members) > 1)[0] + 1))


def test_cosine_modules_widen_at_extreme_offsets(plane):
    """Test the flat crests of the cosine give wider modules than its zero crossings"""
    n = len(plane.angles_o)
    assert _longest_run(plane, 0) > 2 * _longest_run(plane, n // 2)
    assert _longest_run(plane, n - 1) > 2 * _longest_run(plane, n // 2)


def test_continuous_profile_has_no_module_jumps(plane):
    """Test adjacent atoms differ by the mean of their local phase gradients"""
    theta_o = plane.angles_o[plane.angle_index]
    gradient = plane.wavenumber * (np.sin(plane.theta_i_bar) - np.sin(theta_o))
    expected = plane.atom_pitch * (gradient[1:] + gradient[:-1]) / 2
    mismatch = np.angle(np.exp(1j * (np.diff(plane.phases) - expected)))
    assert np.allclose(mismatch, 0.0, atol=1e-9)


@pytest.mark.parametrize("profile", ["continuous", "modular"])
def test_phase_at_atoms_matches_stored_phases(scene, source, codebook, profile):
    """Test the interpolated phase equals the stored phase on every atom"""
    design = build_plane(scene, source, codebook, 2.0, 13, profile=profile)
    mismatch = np.angle(np.exp(1j * (design.phase_at(design.positions) - design.phases)))
    assert np.allclose(mismatch, 0.0, atol=1e-6)


def test_unknown_quantizer_and_profile_rejected(scene, source, codebook):
    with pytest.raises(ScenarioError):
        build_plane(scene, source, codebook, 2.0, 13, quantizer="sawtooth")
    with pytest.raises(ScenarioError):
        build_plane(scene, source, codebook, 2.0, 13, profile="stepped")
