"""Panel placement geometry: RIS orientation and per-element coordinates.

A RIS is a vertical panel of rows x cols reflecting elements. Its facing
direction in the XY-plane is chosen so the panel bisects the angle between
the base station and the user cluster (both sides of the reflection path see
the panel face-on). Element coordinates follow from the panel center, the
orientation angle and the element spacings.
"""
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class Position3D:
    """A point in meters; z is height above ground."""

    x: float
    y: float
    z: float = 0.0

    def distance_to(self, other):
        return math.sqrt(
            (self.x - other.x) ** 2 + (self.y - other.y) ** 2 + (self.z - other.z) ** 2
        )

    def as_array(self):
        return np.array([self.x, self.y, self.z])


def compute_ris_orientation(bs, ris_center, ue_centroid):
    """Orientation angle (radians, vs. the X axis) of a RIS panel in the XY-plane.

    The panel line runs along the bisector RC of the angle B-R-U. The bisector
    is built from the unit vectors toward B and U; when the angle at R is acute
    the vector toward B is negated first so the panel faces both endpoints.
    Collinear B, R, U leave the bisector undefined; the panel is then placed
    perpendicular to RU.

    Returns -arctan(x_RC / y_RC), in (-pi/2, pi/2].
    """
    rb = np.array([bs.x - ris_center.x, bs.y - ris_center.y])
    ru = np.array([ue_centroid.x - ris_center.x, ue_centroid.y - ris_center.y])
    nrb = np.hypot(*rb)
    nru = np.hypot(*ru)
    if nrb == 0.0 or nru == 0.0:
        raise ValueError("degenerate geometry: RIS coincides with BS or UE centroid")
    cos_angle = float(np.dot(rb, ru)) / (nrb * nru)
    if cos_angle >= 0.0:
        rc = -rb / nrb + ru / nru
    else:
        rc = rb / nrb + ru / nru
    if np.hypot(*rc) < 1e-12:
        # collinear B, R, U: face the panel toward U (line perpendicular to RU)
        rc = ru / nru
    x_rc, y_rc = float(rc[0]), float(rc[1])
    if y_rc == 0.0:
        return math.pi / 2.0
    return -math.atan(x_rc / y_rc)


@dataclass(frozen=True)
class RisGeometry:
    """A rows x cols element grid centered on `center`, tilted by `orientation_angle`.

    element_spacing_v is the in-plane (horizontal) pitch along the panel line,
    element_spacing_h the vertical pitch. Immutable; element positions are
    derived once and cached.
    """

    center: Position3D
    rows: int = 101
    cols: int = 101
    element_spacing_v: float = 0.01
    element_spacing_h: float = 0.01
    orientation_angle: float = 0.0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("RIS element grid needs rows, cols >= 1")

    @cached_property
    def element_positions(self):
        return compute_element_positions(self)

    @property
    def n_elements(self):
        return self.rows * self.cols


def compute_element_positions(geom):
    """Coordinates of every element, shape (rows, cols, 3).

    Element (l1, l2), 1-based, sits at
        x = (l1 - c_r) * d_v * cos(phi) + x_R
        y = (l1 - c_r) * d_v * sin(phi) + y_R
        z = (l2 - c_c) * d_h + z_R
    with the central index (c_r, c_c) = (ceil(rows/2), ceil(cols/2)), so the
    default 101 x 101 grid is centered on element (51, 51) at the panel center.
    """
    c_r = math.ceil(geom.rows / 2)
    c_c = math.ceil(geom.cols / 2)
    phi = geom.orientation_angle
    off_v = (np.arange(1, geom.rows + 1) - c_r) * geom.element_spacing_v
    off_h = (np.arange(1, geom.cols + 1) - c_c) * geom.element_spacing_h
    out = np.empty((geom.rows, geom.cols, 3))
    out[:, :, 0] = geom.center.x + (off_v * math.cos(phi))[:, None]
    out[:, :, 1] = geom.center.y + (off_v * math.sin(phi))[:, None]
    out[:, :, 2] = geom.center.z + off_h[None, :]
    return out


def oriented_ris(center, bs, ue_centroid, rows=101, cols=101,
                 element_spacing_v=0.01, element_spacing_h=0.01):
    """Build a RisGeometry whose panel bisects the BS / UE-centroid angle."""
    phi = compute_ris_orientation(bs, center, ue_centroid)
    return RisGeometry(center, rows, cols, element_spacing_v, element_spacing_h, phi)
