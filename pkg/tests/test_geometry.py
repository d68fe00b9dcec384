"""Panel orientation and element-grid geometry."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from risbandit.geometry import (
    Position3D,
    RisGeometry,
    compute_element_positions,
    compute_ris_orientation,
    oriented_ris,
)


def _panel_dir(phi):
    return np.array([math.cos(phi), math.sin(phi)])


def _reflect_across_line(v, d):
    # mirror a 2D vector across the line with unit direction d
    return 2.0 * float(np.dot(d, v)) * d - v


def test_distance_and_array():
    a = Position3D(0.0, 0.0, 0.0)
    b = Position3D(3.0, 4.0, 12.0)
    assert a.distance_to(b) == pytest.approx(13.0)
    assert np.array_equal(b.as_array(), np.array([3.0, 4.0, 12.0]))


def test_orientation_right_angle_hand_case():
    # BS east, users north, panel at the corner: the line must run at 45 deg
    # so the mirror maps one direction onto the other.
    phi = compute_ris_orientation(Position3D(1, 0), Position3D(0, 0), Position3D(0, 1))
    assert phi == pytest.approx(math.pi / 4)


def test_orientation_obtuse_hand_case():
    # BS west, users north-east: angle at the panel is 135 deg (obtuse branch).
    phi = compute_ris_orientation(Position3D(-1, 0), Position3D(0, 0), Position3D(1, 1))
    assert phi == pytest.approx(math.pi / 8)


def test_orientation_collinear_perpendicular():
    # B, R, U on one line: the panel is placed perpendicular to RU.
    phi = compute_ris_orientation(Position3D(-5, 0), Position3D(0, 0), Position3D(9, 0))
    ru = np.array([1.0, 0.0])
    assert abs(float(np.dot(_panel_dir(phi), ru))) < 1e-12


def test_orientation_degenerate_raises():
    with pytest.raises(ValueError):
        compute_ris_orientation(Position3D(2, 2), Position3D(2, 2), Position3D(5, 5))


def test_orientation_vertical_line_maps_to_half_pi():
    # symmetric endpoints above the panel: the bisecting line is vertical,
    # reported as +pi/2 to honor the (-pi/2, pi/2] range
    phi = compute_ris_orientation(Position3D(-3, 4), Position3D(0, 0), Position3D(3, 4))
    assert phi == math.pi / 2


coords = st.floats(min_value=-400.0, max_value=400.0)


@settings(max_examples=200, deadline=None)
@given(bx=coords, by=coords, ux=coords, uy=coords)
def test_orientation_is_specular(bx, by, ux, uy):
    """Mirroring the BS direction across the panel line lands on +/- the UE direction."""
    r = Position3D(10.0, 20.0)
    rb = np.array([bx - r.x, by - r.y])
    ru = np.array([ux - r.x, uy - r.y])
    nrb, nru = np.hypot(*rb), np.hypot(*ru)
    if nrb < 1e-3 or nru < 1e-3:
        return
    rbh, ruh = rb / nrb, ru / nru
    if abs(rbh[0] * ruh[1] - rbh[1] * ruh[0]) < 1e-3:
        return  # near-collinear: direction of the bisector is numerically unstable
    phi = compute_ris_orientation(Position3D(bx, by), r, Position3D(ux, uy))
    assert -math.pi / 2 < phi <= math.pi / 2
    mirrored = _reflect_across_line(rbh, _panel_dir(phi))
    assert abs(float(np.dot(mirrored, ruh))) == pytest.approx(1.0, abs=1e-6)


@settings(max_examples=60, deadline=None)
@given(alpha=st.floats(min_value=-math.pi, max_value=math.pi))
def test_orientation_rotation_equivariant(alpha):
    b, r, u = Position3D(40, -10), Position3D(0, 0), Position3D(-25, 60)
    phi0 = compute_ris_orientation(b, r, u)
    c, s = math.cos(alpha), math.sin(alpha)

    def rot(p):
        return Position3D(c * p.x - s * p.y, s * p.x + c * p.y, p.z)

    phi1 = compute_ris_orientation(rot(b), rot(r), rot(u))
    rot_mat = np.array([[c, -s], [s, c]])
    expected = rot_mat @ _panel_dir(phi0)
    assert abs(float(np.dot(_panel_dir(phi1), expected))) == pytest.approx(1.0, abs=1e-9)


def test_element_grid_shape_and_center():
    geom = RisGeometry(Position3D(100.0, 50.0, 12.5))
    pos = geom.element_positions
    assert pos.shape == (101, 101, 3)
    assert geom.n_elements == 101 * 101
    # the central element sits exactly on the panel center
    assert np.array_equal(pos[50, 50], np.array([100.0, 50.0, 12.5]))


def test_element_grid_spacings():
    phi = 0.7
    geom = RisGeometry(Position3D(1.0, 2.0, 3.0), rows=5, cols=4,
                       element_spacing_v=0.02, element_spacing_h=0.03,
                       orientation_angle=phi)
    pos = geom.element_positions
    row_step = np.diff(pos, axis=0)
    col_step = np.diff(pos, axis=1)
    assert np.allclose(row_step[..., 0], 0.02 * math.cos(phi))
    assert np.allclose(row_step[..., 1], 0.02 * math.sin(phi))
    assert np.allclose(row_step[..., 2], 0.0)
    assert np.allclose(col_step[..., :2], 0.0)
    assert np.allclose(col_step[..., 2], 0.03)


def test_element_grid_single_element():
    geom = RisGeometry(Position3D(7.0, 8.0, 9.0), rows=1, cols=1)
    assert np.array_equal(geom.element_positions[0, 0], np.array([7.0, 8.0, 9.0]))


def test_element_grid_even_counts_centered_on_ceil_index():
    geom = RisGeometry(Position3D(0.0, 0.0, 0.0), rows=2, cols=2,
                       orientation_angle=0.0)
    pos = compute_element_positions(geom)
    # c_r = ceil(2/2) = 1 (1-based), so the first element is the central one
    assert np.array_equal(pos[0, 0], np.zeros(3))
    assert pos[1, 0, 0] == pytest.approx(0.01)


def test_bad_grid_raises():
    with pytest.raises(ValueError):
        RisGeometry(Position3D(0, 0, 0), rows=0)


def test_oriented_ris_wires_orientation():
    bs = Position3D(-80, 0, 25)
    centroid = Position3D(140, 150)
    center = Position3D(70, 90, 13)
    geom = oriented_ris(center, bs, centroid, rows=3, cols=3)
    assert geom.orientation_angle == compute_ris_orientation(bs, center, centroid)
    assert geom.rows == 3 and geom.cols == 3
